"""
Closed-form laws of the pure-death (blackout) process

Every component of a state vector dies independently at unit rate per count,
so a count ``o`` at time 0 survives to time ``t`` as ``Binom(o, e^{-t})``.
"""


from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

import blackout.general_ctmc as ctmc
from blackout.exceptions import DomainError
from blackout.utils import log_binom_pmf


@dataclass(frozen=True)
class StateSpace:
    """Labels {0..max_label} in each of ``dims`` independent dimensions"""

    max_label: int
    dims: int = 1

    def __post_init__(self):
        if int(self.max_label) != self.max_label or self.max_label < 1:
            raise DomainError(f"max label must be an integer >= 1, got {self.max_label}")
        if int(self.dims) != self.dims or self.dims < 1:
            raise DomainError(f"dims must be an integer >= 1, got {self.dims}")

    @property
    def num_labels(self) -> int:
        return self.max_label + 1

    def check(self, x, name: str = "state") -> np.ndarray:
        """Return ``x`` as an int64 array after checking every component is a
        label of this space.
        """
        arr = np.asarray(x)
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise DomainError(f"{name} has non-integer components")
        elif arr.dtype.kind not in "iub":
            raise DomainError(f"{name} must be integer valued, got {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() > self.max_label):
            raise DomainError(f"{name} has components outside 0..{self.max_label}")
        return arr.astype(np.int64)

    def check_vectors(self, x, name: str = "state") -> np.ndarray:
        """Like :meth:`check`, also requiring a trailing dimension of ``dims``"""
        arr = self.check(x, name)
        if arr.ndim == 0 or arr.shape[-1] != self.dims:
            raise DomainError(f"{name} must have {self.dims} components, got shape {arr.shape}")
        return arr


def _check_time(t, name="t", positive=False):
    t = float(t)
    if np.isnan(t) or t < 0 or (positive and t == 0):
        cond = "> 0" if positive else ">= 0"
        raise DomainError(f"{name} must be {cond}, got {t}")
    return t


def survival(t: float) -> Tuple[float, float]:
    """``(e^{-t}, 1 - e^{-t})`` without cancellation"""
    return float(np.exp(-t)), float(-np.expm1(-t))


@dataclass(frozen=True)
class BridgeParams:
    """Condition X_0 = o and X_t = n and ask for X_s, 0 <= s <= t"""

    o: int
    n: int
    s: float
    t: float

    def __post_init__(self):
        if self.o < 0 or self.n < 0:
            raise DomainError("bridge end points must be nonnegative")
        if self.n > self.o:
            raise DomainError(f"bridge needs n <= o, got n={self.n} o={self.o}")
        _check_time(self.s, "s")
        _check_time(self.t, "t")
        if self.s > self.t:
            raise DomainError(f"bridge needs s <= t, got s={self.s} t={self.t}")

    @property
    def r(self) -> float:
        return bridge_probabilities(self.s, self.t)[0]


def bridge_probabilities(s: float, t: float) -> Tuple[float, float]:
    """``(r, 1 - r)`` with ``r = (e^{-s} - e^{-t}) / (1 - e^{-t})``, the
    chance that a count alive at s is dead by t given it is dead by t.
    """
    s = _check_time(s, "s")
    t = _check_time(t, "t")
    if s > t:
        raise DomainError(f"need s <= t, got s={s} t={t}")
    if s == t:
        return 0.0, 1.0
    if s == 0:
        return 1.0, 0.0
    if np.isinf(t):
        return survival(s)
    r = np.exp(-s) * np.expm1(-(t - s)) / np.expm1(-t)
    rest = np.expm1(-s) / np.expm1(-t)
    return float(r), float(rest)


class PureDeathLaw(object):
    """Forward, reverse and bridge laws of the pure-death process on a
    :class:`StateSpace`.
    """

    def __init__(self, space: StateSpace):
        self.space = space

    def _check_label(self, value, name):
        if int(value) != value or not 0 <= value <= self.space.max_label:
            raise DomainError(f"{name}={value} outside 0..{self.space.max_label}")
        return int(value)

    def forward_pmf(self, o: int, t: float) -> np.ndarray:
        """pmf of X_t over {0..o} given X_0 = o"""
        o = self._check_label(o, "o")
        t = _check_time(t)
        q, one_minus_q = survival(t)
        return np.exp(log_binom_pmf(np.arange(o + 1), o, q, one_minus_q))

    def sample_forward(self, x0, t: float, rng: np.random.Generator) -> np.ndarray:
        """Draw X_t componentwise given X_0 = x0"""
        x0 = self.space.check(x0, "x0")
        t = _check_time(t)
        return rng.binomial(x0, np.exp(-t)).astype(np.int64)

    def reverse_rate(self, o, m, t: float):
        """Rate at which the reverse process moves m -> m+1 at time t,
        given X_0 = o
        """
        t = _check_time(t, positive=True)
        o = np.asarray(o)
        m = np.asarray(m)
        if np.any(m < 0) or np.any(m > o) or np.any(o > self.space.max_label):
            raise DomainError("reverse rate needs 0 <= m <= o <= M")
        res = (o - m) / np.expm1(t)
        return float(res) if res.ndim == 0 else res

    def reverse_rate_matrix(self, o: int, t: float) -> np.ndarray:
        """Reverse-rate matrix ``R[m', m]`` given X_0 = o; only ``m' = m+1``
        entries for ``m < o`` are nonzero.
        """
        o = self._check_label(o, "o")
        t = _check_time(t, positive=True)
        res = np.zeros((self.space.num_labels, self.space.num_labels))
        m = np.arange(o)
        res[m + 1, m] = (o - m) / np.expm1(t)
        return res

    def bridge_probability(self, s: float, t: float) -> float:
        return bridge_probabilities(s, t)[0]

    def bridge_pmf(self, p: BridgeParams) -> np.ndarray:
        """pmf of X_s over {n..o} given X_0 = o and X_t = n"""
        self._check_label(p.o, "o")
        r, rest = bridge_probabilities(p.s, p.t)
        k = np.arange(p.o - p.n + 1)
        return np.exp(log_binom_pmf(k, p.o - p.n, r, rest))

    def sample_bridge(self, p: BridgeParams, rng: np.random.Generator, size=None):
        """Draw X_s given X_0 = o and X_t = n"""
        self._check_label(p.o, "o")
        r = bridge_probabilities(p.s, p.t)[0]
        draw = p.n + rng.binomial(p.o - p.n, r, size=size)
        return int(draw) if size is None else draw.astype(np.int64)

    def score(self, o, m, t: float):
        """Score of the pure-death law at state m, time t, given X_0 = o"""
        t = _check_time(t, positive=True)
        o = np.asarray(o)
        m = np.asarray(m)
        if np.any(m < 0) or np.any(m > o):
            raise DomainError("score needs 0 <= m <= o")
        q, one_minus_q = survival(t)
        res = ((o * q - m) / one_minus_q - 1.0) / (m + 1.0)
        return float(res) if res.ndim == 0 else res

    def generator(self) -> ctmc.Generator:
        return ctmc.Generator.pure_death(self.space.max_label)

    def simulate_reverse(
        self,
        o: int,
        xt,
        t: float,
        s: float,
        rng: np.random.Generator,
        max_jump_prob: Optional[float] = None,
    ) -> np.ndarray:
        """Run the reverse process from X_t = xt at time t down to time s,
        given X_0 = o.
        """
        o = self._check_label(o, "o")
        xt = self.space.check(xt, "xt")
        if np.any(xt > o):
            raise DomainError("reverse paths must start at or below o")
        s = _check_time(s, "s")
        t = _check_time(t)
        if s > t:
            raise DomainError(f"need s <= t, got s={s} t={t}")
        if s == 0:
            # every remaining count is restored by time 0
            return np.full_like(xt, o)
        return ctmc.simulate_reverse(
            lambda u: self.reverse_rate_matrix(o, u),
            xt,
            t,
            s,
            rng,
            max_jump_prob=max_jump_prob or ctmc.MAX_JUMP_PROB,
        )
