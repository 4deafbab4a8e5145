"""
Observation-time schedules

Times are spaced so that the survival probability ``e^{-t}`` is uniform in
logit space between ``1 - e^{-t_T}`` and ``e^{-t_T}``. This equalizes the
Fisher information of the binomial observation across steps.
"""


from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from blackout.exceptions import DomainError

LOG2 = float(np.log(2.0))


def fisher_density(t):
    """Unnormalized density ``1 / (1 - e^{-t})`` of observation times"""
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("fisher density needs t > 0")
    res = -1.0 / np.expm1(-t)
    return float(res) if res.ndim == 0 else res


def logit_survival(t):
    """``logit(e^{-t})`` evaluated without cancellation near t = 0"""
    t = np.asarray(t, dtype=float)
    res = -t - np.log(-np.expm1(-t))
    return float(res) if res.ndim == 0 else res


@dataclass(frozen=True)
class Schedule:
    """Increasing observation times ``t_1 < ... < t_T``.

    ``grid`` holds ``t_0 = 0`` followed by the T schedule times.
    """

    grid: Tuple[float, ...]

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.size < 3 or grid[0] != 0.0:
            raise DomainError("schedule needs t_0 = 0 and at least two times")
        if np.any(np.diff(grid) <= 0):
            raise DomainError("schedule times must be strictly increasing")

    @property
    def T(self) -> int:
        return len(self.grid) - 1

    @property
    def horizon(self) -> float:
        return self.grid[-1]

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.grid[1:])

    def _check_index(self, k, lowest=1):
        k = np.asarray(k)
        if np.any(k < lowest) or np.any(k > self.T):
            raise DomainError(f"schedule index outside {lowest}..{self.T}")
        return k

    def t(self, k):
        """t_k; ``t(0)`` is 0"""
        k = self._check_index(k, lowest=0)
        res = np.asarray(self.grid)[k]
        return float(res) if res.ndim == 0 else res

    def survival(self, k):
        """``e^{-t_k}``"""
        return np.exp(-self.t(k))

    def delta(self, k):
        """``t_k - t_{k-1}``"""
        k = self._check_index(k)
        return self.t(k) - self.t(k - 1)

    def to_rows(self) -> List[Tuple[int, float, float]]:
        return [(k, self.grid[k], float(np.exp(-self.grid[k]))) for k in range(1, self.T + 1)]


def make_schedule(T: int, horizon: float) -> Schedule:
    """Build the T-step schedule ending exactly at ``horizon``.

    The first time is ``-log(1 - e^{-horizon})`` and the survival
    probabilities of steps k and T+1-k add up to one.
    """
    if int(T) != T or T < 2:
        raise DomainError(f"schedule needs T >= 2, got {T}")
    horizon = float(horizon)
    if not horizon > LOG2 or not np.isfinite(horizon):
        raise DomainError(f"schedule horizon must exceed log 2, got {horizon}")
    T = int(T)

    # logit(1 - e^{-horizon}); the last grid point is its negation
    top = -logit_survival(horizon)
    k = np.arange(1, T + 1)
    frac = (T + 1 - 2 * k) / (T - 1)
    times = np.logaddexp(0.0, -top * frac)
    times[-1] = horizon
    if not times[0] > 0 or np.any(np.diff(times) <= 0):
        raise DomainError(f"schedule horizon {horizon} is too large, the first times underflow to 0")
    return Schedule(tuple([0.0] + times.tolist()))
