"""
Desk-scale evaluation of samplers and simulators
"""


import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

import blackout.general_ctmc as ctmc
from blackout.exceptions import DomainError, ShapeError
from blackout.pure_death import PureDeathLaw, StateSpace, survival

# joint TV is enumerated when the number of joint labels is at most this
JOINT_LIMIT = 2 ** 20

MIN_REVERSE_PATHS = 10000


def _as_samples(samples, name="samples") -> np.ndarray:
    arr = np.asarray(samples)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a (count, dims) array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DomainError(f"{name} is empty")
    return arr.astype(np.int64)


def empirical_pmf(samples, num_labels: Optional[int] = None) -> np.ndarray:
    """Empirical pmf of one-dimensional samples"""
    arr = _as_samples(samples)
    if arr.shape[1] != 1:
        raise ShapeError("empirical_pmf needs one-dimensional samples")
    counts = np.bincount(arr[:, 0], minlength=num_labels or 0)
    return counts / arr.shape[0]


def _pmf_tv(p, q) -> float:
    size = max(p.size, q.size)
    p = np.pad(p, (0, size - p.size))
    q = np.pad(q, (0, size - q.size))
    return float(0.5 * np.abs(p - q).sum())


def tv_distance(
    a,
    b: Union[np.ndarray, ctmc.Distribution],
    num_labels: Optional[int] = None,
    joint: Optional[bool] = None,
) -> float:
    """Total-variation distance between the empirical law of samples ``a``
    and either samples ``b`` or an analytic pmf ``b``.

    ``b`` is taken as a pmf when it is a Distribution or a float array (one
    dimensional samples only). Between two sample sets the joint law is
    compared when ``joint`` is true, the worst per-dimension marginal when it
    is false; by default joint comparison is used when ``num_labels ** dims``
    is at most 2**20.
    """
    a = _as_samples(a, "a")
    if isinstance(b, ctmc.Distribution):
        b = b.probs
    b_arr = np.asarray(b)
    if b_arr.dtype.kind == "f":
        return _pmf_tv(empirical_pmf(a), b_arr)

    b_arr = _as_samples(b_arr, "b")
    if a.shape[1] != b_arr.shape[1]:
        raise ShapeError(f"sample sets have {a.shape[1]} and {b_arr.shape[1]} dims")
    if num_labels is None:
        num_labels = int(max(a.max(), b_arr.max())) + 1
    if joint is None:
        joint = num_labels ** a.shape[1] <= JOINT_LIMIT

    if joint:
        _, inverse = np.unique(np.concatenate([a, b_arr]), axis=0, return_inverse=True)
        inverse = np.ravel(inverse)
        size = int(inverse.max()) + 1
        pa = np.bincount(inverse[: a.shape[0]], minlength=size) / a.shape[0]
        pb = np.bincount(inverse[a.shape[0]:], minlength=size) / b_arr.shape[0]
        return _pmf_tv(pa, pb)

    return max(
        _pmf_tv(empirical_pmf(a[:, i], num_labels), empirical_pmf(b_arr[:, i], num_labels))
        for i in range(a.shape[1])
    )


def correlation_gap(a, b) -> float:
    """Largest absolute difference between pairwise component correlations"""
    a = _as_samples(a, "a")
    b = _as_samples(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"sample sets have {a.shape[1]} and {b.shape[1]} dims")
    if a.shape[1] == 1:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ca = np.nan_to_num(np.corrcoef(a, rowvar=False))
        cb = np.nan_to_num(np.corrcoef(b, rowvar=False))
    return float(np.abs(ca - cb).max())


@dataclass
class MomentReport:
    mean_error: float
    variance_error: float
    # Monte Carlo standard errors of the two estimates
    mean_stderr: float
    variance_stderr: float

    def within(self, bands: float = 3.0) -> bool:
        return (
            abs(self.mean_error) <= bands * self.mean_stderr + 1e-12
            and abs(self.variance_error) <= bands * self.variance_stderr + 1e-12
        )


def moment_report(samples, o: int, t: float, law: Optional[PureDeathLaw] = None) -> MomentReport:
    """Compare the empirical mean and variance of X_t samples started from
    X_0 = o with the binomial values ``o e^{-t}`` and ``o e^{-t}(1 - e^{-t})``.
    """
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError("moment report needs at least one sample")
    if law is not None:
        law.forward_pmf(o, t)
    q, one_minus_q = survival(t)
    mean = o * q
    var = o * q * one_minus_q
    # fourth central moment of Binom(o, q)
    fourth = var * (1.0 + 3.0 * (o - 2) * q * one_minus_q)
    n = arr.size
    sample_var = arr.var(ddof=1) if n > 1 else 0.0
    return MomentReport(
        mean_error=float(arr.mean() - mean),
        variance_error=float(sample_var - var),
        mean_stderr=float(np.sqrt(var / n)),
        variance_stderr=float(np.sqrt(max(fourth - var ** 2, 0.0) / n)),
    )


def reverse_consistency_report(
    process: Union[PureDeathLaw, ctmc.Generator],
    o: int,
    s: float,
    t: float,
    paths: int,
    rng: np.random.Generator,
) -> float:
    """Draw ``paths`` forward states at time t from X_0 = o, run the reverse
    process down to time s and return the TV distance to the forward law at s.
    """
    if paths < MIN_REVERSE_PATHS:
        raise DomainError(f"reverse consistency needs at least {MIN_REVERSE_PATHS} paths")
    if s == t:
        return 0.0
    if not 0 < s < t:
        raise DomainError(f"need 0 < s < t, got s={s} t={t}")

    if isinstance(process, PureDeathLaw):
        xt = process.sample_forward(np.full(paths, o), t, rng)
        xs = process.simulate_reverse(o, xt, t, s, rng)
        return tv_distance(xs, process.forward_pmf(o, s))

    g = process
    p0 = ctmc.Distribution.point_mass(g.max_label, o)
    xt = ctmc.sample_distribution(ctmc.forward_solve(g, p0, t), rng, paths)

    def rate_matrix(u):
        return ctmc.reverse_rate_matrix(g, ctmc.forward_solve(g, p0, u))

    xs = ctmc.simulate_reverse(rate_matrix, xt, t, s, rng)
    return tv_distance(xs, ctmc.forward_solve(g, p0, s))


def gaussian_score_gap(o: int = 256, t: float = 1.0, near: Sequence[float] = (4.0, 14.0)) -> float:
    """Largest relative gap between the normalized discrete score of the
    pure-death law and the matched-Gaussian log-density difference, over
    states whose half-step midpoint lies ``near[0]..near[1]`` from the mean.
    """
    law = PureDeathLaw(StateSpace(o))
    p_t = ctmc.Distribution(law.forward_pmf(o, t))
    g = law.generator()
    q, one_minus_q = survival(t)
    mean = o * q
    var = o * q * one_minus_q

    gaps = []
    for m in range(o):
        if not near[0] <= abs(m + 0.5 - mean) <= near[1]:
            continue
        discrete = ctmc.discrete_score(g, p_t, m, 0) / (m + 1)
        gaussian = np.expm1(((m - mean) ** 2 - (m + 1 - mean) ** 2) / (2 * var))
        gaps.append(abs(discrete - gaussian) / abs(gaussian))
    if not gaps:
        raise DomainError("no states near the mode")
    return float(max(gaps))


def write_report(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write a CSV report with a fixed header row"""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path
