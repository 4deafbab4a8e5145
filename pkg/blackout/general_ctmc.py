"""
Continuous-time Markov chains on the finite label set {0..M}

The generator ``rates`` is stored in the "dagger" orientation used by the
master equation ``d/dt p = rates @ p``: entry ``[m, m']`` is the rate of the
forward transition ``m' -> m`` and every column sums to zero.
"""


from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import expm
from scipy.stats import poisson

import blackout.config as config
from blackout.exceptions import (
    ConvergenceError,
    DomainError,
    ShapeError,
    UnreachableStateError,
)

# probabilities below this are treated as zero when conditioning on a state
UNREACHABLE = 1e-300

# largest expected number of reverse jumps per path in one substep
MAX_JUMP_PROB = 0.05

MAX_SUBSTEPS = 1000000

# column sums of a generator must vanish up to this (relative) tolerance
GENERATOR_ATOL = 1e-12

DISTRIBUTION_ATOL = 1e-9


@dataclass(frozen=True)
class Transition:
    """One transition type: ``m' -> m' + sign * step`` at rate ``rate(m')``.

    Transitions that would leave the state space get rate 0.
    """

    step: int
    sign: int
    rate: Callable[[int], float]

    @property
    def displacement(self) -> int:
        return self.sign * self.step


class Generator(object):
    """An immutable generator matrix together with its transition types"""

    def __init__(
        self,
        rates,
        displacements: Optional[Sequence[int]] = None,
        jump_rates=None,
    ):
        """Create a new Generator

        :param rates: square matrix, ``rates[m, m']`` is the rate of ``m' -> m``
        :param displacements: the transition types as signed displacements
            ``m - m'``. Inferred from the nonzero off-diagonal entries when
            omitted.
        :param jump_rates: optional ``(R, M+1)`` array with the rate of every
            transition type out of every state. Derived from ``rates`` when
            omitted.
        """
        rates = np.array(rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or rates.shape[0] < 2:
            raise DomainError(f"generator must be a square matrix, got {rates.shape}")
        if not np.all(np.isfinite(rates)):
            raise DomainError("generator has non-finite entries")

        off_diag = rates - np.diag(np.diag(rates))
        if np.any(off_diag < 0):
            raise DomainError("generator has a negative transition rate")

        scale = max(1.0, float(np.abs(rates).max()))
        col_sums = rates.sum(axis=0)
        if np.any(np.abs(col_sums) > GENERATOR_ATOL * scale):
            worst = float(np.abs(col_sums).max())
            raise DomainError(f"generator columns do not sum to zero (max {worst:g})")

        rates.setflags(write=False)
        off_diag.setflags(write=False)
        self.rates = rates
        self.off_diagonal = off_diag
        self.max_label = rates.shape[0] - 1

        labels = np.arange(self.num_labels)
        if displacements is None:
            targets, sources = np.nonzero(off_diag)
            displacements = sorted(set((targets - sources).tolist()))
        self.displacements: Tuple[int, ...] = tuple(int(d) for d in displacements)

        if jump_rates is None:
            jump_rates = np.zeros((len(self.displacements), self.num_labels))
            for r, disp in enumerate(self.displacements):
                targets = labels + disp
                inside = (targets >= 0) & (targets <= self.max_label)
                jump_rates[r, inside] = off_diag[targets[inside], labels[inside]]
        jump_rates = np.array(jump_rates, dtype=float)
        jump_rates.setflags(write=False)
        self.jump_rates = jump_rates

    @property
    def num_labels(self) -> int:
        return self.max_label + 1

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.rates)

    @property
    def uniform_rate(self) -> float:
        """The largest exit rate, used as the uniformization rate"""
        return float(self.exit_rates.max())

    @property
    def num_transitions(self) -> int:
        return len(self.displacements)

    def jump_rate(self, r: int, m_prime: int) -> float:
        """Rate at which transition type ``r`` fires from state ``m_prime``"""
        if not 0 <= r < self.num_transitions:
            raise DomainError(f"unknown transition id {r}")
        if not 0 <= m_prime <= self.max_label:
            return 0.0
        return float(self.jump_rates[r, m_prime])

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition], max_label: int) -> "Generator":
        return generator_from_transitions(transitions, max_label)

    @classmethod
    def pure_death(cls, max_label: int) -> "Generator":
        """The banded generator of independent deaths at rate ``m``"""
        return generator_from_transitions([Transition(1, -1, lambda m: float(m))], max_label)

    @classmethod
    def birth_death(
        cls,
        max_label: int,
        birth: Union[float, Callable[[int], float]],
        death: Union[float, Callable[[int], float]],
    ) -> "Generator":
        """Birth at constant rate ``birth`` (or ``birth(m)``) and death at
        rate ``death * m`` (or ``death(m)``). Transition ids: 0 = birth,
        1 = death.
        """
        birth_fn = birth if callable(birth) else (lambda m: float(birth))
        death_fn = death if callable(death) else (lambda m: float(death) * m)
        return generator_from_transitions(
            [Transition(1, 1, birth_fn), Transition(1, -1, death_fn)], max_label
        )


class Distribution(object):
    """An immutable probability vector over {0..M}"""

    def __init__(self, probs):
        probs = np.array(probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ShapeError(f"distribution must be a vector, got {probs.shape}")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise DomainError("distribution has negative or non-finite entries")
        total = probs.sum()
        if abs(total - 1.0) > DISTRIBUTION_ATOL:
            raise DomainError(f"distribution sums to {total!r}, not 1")
        probs.setflags(write=False)
        self.probs = probs

    @property
    def max_label(self) -> int:
        return self.probs.size - 1

    @classmethod
    def point_mass(cls, max_label: int, o: int) -> "Distribution":
        if not 0 <= o <= max_label:
            raise DomainError(f"state {o} outside 0..{max_label}")
        probs = np.zeros(max_label + 1)
        probs[o] = 1.0
        return cls(probs)

    def __getitem__(self, m):
        return self.probs[m]


def generator_from_transitions(transitions: Sequence[Transition], max_label: int) -> Generator:
    """Assemble a generator by superposing the given transition types"""
    if max_label < 1:
        raise DomainError(f"max label must be >= 1, got {max_label}")
    size = max_label + 1
    labels = np.arange(size)
    rates = np.zeros((size, size))
    jump_rates = np.zeros((len(transitions), size))

    for r, trans in enumerate(transitions):
        if trans.step < 1 or trans.sign not in (-1, 1):
            raise DomainError(f"invalid transition {trans}")
        for m_prime in labels:
            rate = float(trans.rate(int(m_prime)))
            if rate < 0 or not np.isfinite(rate):
                raise DomainError(f"transition rate {rate} at state {m_prime} is invalid")
            target = m_prime + trans.displacement
            if target < 0 or target > max_label:
                continue
            rates[target, m_prime] += rate
            jump_rates[r, m_prime] = rate

    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=0))
    return Generator(
        rates,
        displacements=[t.displacement for t in transitions],
        jump_rates=jump_rates,
    )


def _poisson_weights(mu: float) -> np.ndarray:
    """Poisson(mu) pmf on 0..K with the tail beyond K far below 1e-16"""
    upper = int(np.ceil(mu + 10.0 * np.sqrt(mu) + 30.0))
    return poisson.pmf(np.arange(upper + 1), mu)


def _uniformize(g: Generator, start: np.ndarray, t: float) -> np.ndarray:
    """exp(rates * t) @ start as a Poisson mixture of powers of the
    nonnegative jump matrix. Every term is nonnegative.
    """
    lam = g.uniform_rate
    if t == 0 or lam == 0:
        return np.array(start, dtype=float)
    jump = np.maximum(np.eye(g.num_labels) + g.rates / lam, 0.0)
    weights = _poisson_weights(lam * t)
    config.get_log().debug(f"uniformization: rate={lam:g} t={t:g} terms={weights.size}")

    term = np.array(start, dtype=float)
    acc = weights[0] * term
    for weight in weights[1:]:
        term = jump @ term
        acc += weight * term
    return acc


def _check_time(t: float, name: str = "t") -> float:
    t = float(t)
    if not t >= 0 or not np.isfinite(t):
        raise DomainError(f"{name} must be a finite nonnegative time, got {t}")
    return t


def forward_solve(g: Generator, p0: Distribution, t: float) -> Distribution:
    """Return the law at time t of the chain started from p0"""
    t = _check_time(t)
    if p0.probs.size != g.num_labels:
        raise ShapeError(f"distribution has {p0.probs.size} labels, generator {g.num_labels}")
    return Distribution(_uniformize(g, p0.probs, t))


def transition_matrix(g: Generator, t: float) -> np.ndarray:
    """exp(rates * t); column ``o`` is the law of X_t given X_0 = o"""
    t = _check_time(t)
    return _uniformize(g, np.eye(g.num_labels), t)


def sample_distribution(probs, rng: np.random.Generator, size=None) -> np.ndarray:
    """Categorical draws from ``probs`` (a vector or a Distribution)"""
    if isinstance(probs, Distribution):
        probs = probs.probs
    cum = np.cumsum(probs)
    u = rng.random(size) * cum[-1]
    return np.searchsorted(cum, u, side="right").astype(np.int64)


def _check_states(g: Generator, states) -> np.ndarray:
    states = np.array(states)
    if states.size and (states.min() < 0 or states.max() > g.max_label):
        raise DomainError(f"state outside 0..{g.max_label}")
    return states.astype(np.int64)


def simulate_exact(g: Generator, x0, t: float, rng: np.random.Generator, size=None):
    """Exact draws of X_t given X_0 = x0 by event-driven simulation.

    ``x0`` may be a single state or an array of start states; with ``size``
    a single ``x0`` is replicated ``size`` times.
    """
    t = _check_time(t)
    starts = _check_states(g, x0)
    if size is not None:
        starts = np.full(size, starts, dtype=np.int64)
    shape = starts.shape
    states = starts.ravel().copy()

    exit_rates = g.exit_rates
    clock = np.zeros(states.size)
    active = np.flatnonzero(exit_rates[states] > 0)
    while active.size:
        clock[active] += rng.exponential(1.0 / exit_rates[states[active]])
        active = active[clock[active] <= t]
        if not active.size:
            break
        cum = np.cumsum(g.off_diagonal[:, states[active]], axis=0)
        u = rng.random(active.size) * cum[-1]
        states[active] = np.argmax(cum > u, axis=0)
        active = active[exit_rates[states[active]] > 0]

    if not shape:
        return int(states[0])
    return states.reshape(shape)


def _check_reachable(p_s: Distribution, m: int):
    if not 0 <= m <= p_s.max_label:
        raise DomainError(f"state {m} outside 0..{p_s.max_label}")
    if p_s.probs[m] < UNREACHABLE:
        raise UnreachableStateError(f"state {m} has probability {p_s.probs[m]:g}")


def reverse_rates(g: Generator, p_s: Distribution, m: int) -> List[Tuple[int, float]]:
    """The reverse-time transitions out of ``m`` as ``(target, rate)`` pairs.

    Targets are the preimages of forward transitions into ``m``.
    """
    _check_reachable(p_s, m)
    probs = p_s.probs
    res = []
    for r, disp in enumerate(g.displacements):
        m_prime = m - disp
        rate = g.jump_rate(r, m_prime)
        if rate <= 0:
            continue
        res.append((m_prime, rate * probs[m_prime] / probs[m]))
    return res


def reverse_rate_matrix(g: Generator, p_s: Distribution) -> np.ndarray:
    """Matrix ``R`` with ``R[m', m]`` the reverse rate ``m -> m'``.

    Columns of unreachable states are zero.
    """
    probs = p_s.probs
    reachable = probs >= UNREACHABLE
    res = (g.off_diagonal * probs[np.newaxis, :]).T
    res[:, ~reachable] = 0.0
    res[:, reachable] /= probs[np.newaxis, reachable]
    return res


def discrete_score(g: Generator, p_s: Distribution, m: int, r: int) -> float:
    """Unnormalized discrete score of transition type ``r`` at state ``m``:
    ``nu(m') (p[m'] - p[m]) / p[m]`` where ``m'`` is the preimage of ``m``.
    """
    if not 0 <= r < g.num_transitions:
        raise DomainError(f"unknown transition id {r}")
    _check_reachable(p_s, m)
    m_prime = m - g.displacements[r]
    if not 0 <= m_prime <= g.max_label:
        raise DomainError(f"transition {r} has no preimage of state {m}")
    rate = g.jump_rate(r, m_prime)
    if rate <= 0:
        raise DomainError(f"transition {r} cannot fire from {m_prime}")
    probs = p_s.probs
    return rate * (probs[m_prime] - probs[m]) / probs[m]


def kolmogorov_residuals(g: Generator, t: float, step: float = 1e-4) -> Tuple[float, float]:
    """Max-norm residuals of the forward and backward Kolmogorov equations
    for exp(rates * t), with dP/dt from a five-point central difference.
    """
    t = float(t)
    if not t > 2 * step:
        raise DomainError(f"t must exceed twice the step {step}, got {t}")

    def trans(u):
        return expm(g.rates * u)

    deriv = (
        -trans(t + 2 * step) + 8 * trans(t + step) - 8 * trans(t - step) + trans(t - 2 * step)
    ) / (12 * step)
    mat = trans(t)
    forward = float(np.abs(deriv - g.rates @ mat).max())
    backward = float(np.abs(deriv - mat @ g.rates).max())
    return forward, backward


def _leap(rates: np.ndarray, states: np.ndarray, dt: float, rng: np.random.Generator):
    """Apply at most one reverse jump per path over a substep of length dt"""
    cols = rates[:, states]
    cum = np.cumsum(cols, axis=0)
    total = cum[-1]
    jumps = np.flatnonzero(rng.random(states.size) < -np.expm1(-total * dt))
    if not jumps.size:
        return
    u = rng.random(jumps.size) * total[jumps]
    states[jumps] = np.argmax(cum[:, jumps] > u, axis=0)


def simulate_reverse(
    rate_matrix: Callable[[float], np.ndarray],
    states,
    t: float,
    s: float,
    rng: np.random.Generator,
    max_jump_prob: float = MAX_JUMP_PROB,
) -> np.ndarray:
    """Run the reverse-time process from time t down to time s.

    :param rate_matrix: callable returning the reverse-rate matrix at a time
    :param states: states of the paths at time t
    :param max_jump_prob: bound on (largest exit rate among occupied states)
        times substep length
    """
    if not 0 <= s <= t:
        raise DomainError(f"need 0 <= s <= t, got s={s} t={t}")
    states = np.array(states, dtype=np.int64)
    shape = states.shape
    states = states.ravel()

    now = float(t)
    substeps = 0
    while now > s:
        substeps += 1
        if substeps > MAX_SUBSTEPS:
            raise ConvergenceError(f"reverse simulation exceeded {MAX_SUBSTEPS} substeps")

        occupied = np.unique(states)
        step = now - s
        fastest = rate_matrix(now)[:, occupied].sum(axis=0).max()
        if fastest > 0:
            step = min(step, max_jump_prob / fastest)

        rates = rate_matrix(now - step / 2)
        fastest = rates[:, occupied].sum(axis=0).max()
        if fastest * step > max_jump_prob:
            step = max_jump_prob / fastest
            rates = rate_matrix(now - step / 2)

        _leap(rates, states, step, rng)
        now = s if step >= now - s else now - step

    config.get_log().debug(f"reverse simulation {t:g} -> {s:g}: {substeps} substeps")
    return states.reshape(shape)


class TransitionCache(object):
    """Transition matrices at a fixed list of times, computed on first use"""

    def __init__(self, g: Generator, times: Sequence[float]):
        self.generator = g
        self.times = tuple(float(t) for t in times)
        self._matrices = {}

    def __call__(self, index: int) -> np.ndarray:
        mat = self._matrices.get(index)
        if mat is None:
            mat = transition_matrix(self.generator, self.times[index])
            self._matrices[index] = mat
        return mat
