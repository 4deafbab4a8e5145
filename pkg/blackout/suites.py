"""
Validation suites run by ``blackout validate``

Each suite is a function registered with the :func:`suite` decorator. It
receives the requested maximum label and a random generator and returns a
list of :class:`Check` rows. A check passes when its value is below its
tolerance.
"""


import inspect
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import xlogy

import blackout.config as config
import blackout.general_ctmc as ctmc
from blackout.evaluate import gaussian_score_gap, reverse_consistency_report
from blackout.exceptions import DomainError
from blackout.loss import LossKind, loss_weight, per_element_loss_grad
from blackout.predictor import MlpParams, mlp_backprop, mlp_features, mlp_forward
from blackout.pure_death import BridgeParams, PureDeathLaw, StateSpace
from blackout.rng import VALIDATE_STREAM, substream
from blackout.schedule import LOG2, logit_survival, make_schedule
from blackout.utils import prefix_text

# matrix based suites check at most this many labels
MATRIX_CHECK_LABELS = 16


@dataclass
class Check:
    suite: str
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tolerance)

    def to_row(self):
        return (self.suite, self.name, repr(float(self.value)), repr(float(self.tolerance)), self.passed)


class Suite:
    """A named validation suite and the function that implements it"""

    def __init__(self, name: str, impl_fn: Callable, order: int, randomized: bool):
        self.name = name
        self.impl_fn = impl_fn
        self.order = order
        self.randomized = randomized
        self.description = inspect.cleandoc(impl_fn.__doc__ or "").split("\n")[0]

    def run(self, max_label: int, rng: Optional[np.random.Generator]) -> List[Check]:
        return self.impl_fn(max_label, rng)


SUITES = OrderedDict()


def suite(name: str, order: int = 99999, randomized: bool = False):
    """Register a validation suite by using this as a decorator on a function!"""

    def capture_fn(fn):
        SUITES[name] = Suite(name, fn, order, randomized)
        return fn

    return capture_fn


def get_suites(names: Sequence[str]) -> List[Suite]:
    """Resolve suite names; ``all`` selects every registered suite"""
    ordered = sorted(SUITES.values(), key=lambda s: s.order)
    if "all" in names:
        return ordered
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise DomainError(f"unknown validation suite(s): {', '.join(unknown)}")
    return [s for s in ordered if s.name in names]


def get_suite_help() -> str:
    lines = [f"{s.name}: {s.description}" for s in sorted(SUITES.values(), key=lambda s: s.order)]
    return "Validation suites:\n" + prefix_text("\n".join(lines), "  ")


def run_suites(names: Sequence[str], max_label: int, seed: Optional[int] = None) -> List[Check]:
    log = config.get_log()
    checks = []
    for idx, current in enumerate(get_suites(names)):
        rng = None
        if current.randomized:
            if seed is None:
                raise DomainError(f"suite {current.name!r} is randomized and needs a seed")
            rng = substream(seed, VALIDATE_STREAM, idx)
        log.info(f"running validation suite {current.name}")
        res = current.run(max_label, rng)
        for check in res:
            log.info(f"  {check.name}: {check.value:.3g} (tolerance {check.tolerance:g})")
        checks.extend(res)
    return checks


BRIDGE_TIME_PAIRS = [
    (0.01, 0.1),
    (0.1, 0.5),
    (0.3, 1.5),
    (LOG2, 2.0),
    (0.5, 5.0),
    (1.0, 3.0),
    (2.0, 15.0),
    (5.0, 10.0),
]


@suite("bridge", order=0)
def bridge_suite(max_label, rng):
    """Binomial bridge against the conditional law built from transition matrices"""
    max_label = min(max_label, MATRIX_CHECK_LABELS)
    law = PureDeathLaw(StateSpace(max_label))
    g = law.generator()
    worst = 0.0
    worst_sum = 0.0
    for s, t in BRIDGE_TIME_PAIRS:
        p_ts = ctmc.transition_matrix(g, t - s)
        p_s = ctmc.transition_matrix(g, s)
        p_t = ctmc.transition_matrix(g, t)
        for o in range(max_label + 1):
            for n in range(o + 1):
                pmf = law.bridge_pmf(BridgeParams(o, n, s, t))
                expected = p_ts[n, n:o + 1] * p_s[n:o + 1, o] / p_t[n, o]
                worst = max(worst, float(np.abs(pmf - expected).max()))
                worst_sum = max(worst_sum, abs(float(pmf.sum()) - 1.0))

    limits = 0.0
    for o in range(max_label + 1):
        for n in range(o + 1):
            start = law.bridge_pmf(BridgeParams(o, n, 0.0, 1.0))
            end = law.bridge_pmf(BridgeParams(o, n, 1.0, 1.0))
            limits = max(limits, abs(start[-1] - 1.0), abs(end[0] - 1.0))
    return [
        Check("bridge", "bridge_bayes_max_error", worst, 1e-10),
        Check("bridge", "bridge_pmf_sum_error", worst_sum, 1e-12),
        Check("bridge", "bridge_limit_error", limits, 1e-15),
    ]


@suite("forward", order=10)
def forward_suite(max_label, rng):
    """Closed-form forward law against uniformization, and the semigroup property"""
    max_label = min(max_label, MATRIX_CHECK_LABELS)
    law = PureDeathLaw(StateSpace(max_label))
    g = law.generator()
    worst = 0.0
    for t in (0.01, LOG2, 1.0, 5.0, 15.0):
        mat = ctmc.transition_matrix(g, t)
        for o in range(max_label + 1):
            worst = max(worst, float(np.abs(mat[: o + 1, o] - law.forward_pmf(o, t)).max()))

    bd = ctmc.Generator.birth_death(max_label, 1.0, 1.0)
    p0 = ctmc.Distribution.point_mass(max_label, max_label // 2)
    direct = ctmc.forward_solve(bd, p0, 1.7)
    composed = ctmc.forward_solve(bd, ctmc.forward_solve(bd, p0, 0.5), 1.2)
    semigroup = float(np.abs(direct.probs - composed.probs).max())
    return [
        Check("forward", "closed_form_max_error", worst, 1e-9),
        Check("forward", "semigroup_max_error", semigroup, 1e-9),
    ]


@suite("reverse", order=20, randomized=True)
def reverse_suite(max_label, rng):
    """Reverse-time simulation reproduces the forward marginal"""
    o = min(8, max_label)
    law = PureDeathLaw(StateSpace(max_label))
    pure = reverse_consistency_report(law, o, 0.3, 1.5, 100000, rng)
    bd = ctmc.Generator.birth_death(8, 1.0, 1.0)
    birth_death = reverse_consistency_report(bd, 4, 0.3, 1.5, 100000, rng)
    return [
        Check("reverse", "pure_death_tv", pure, 0.02),
        Check("reverse", "birth_death_tv", birth_death, 0.02),
    ]


@suite("schedule", order=30)
def schedule_suite(max_label, rng):
    """Identities of the T=1000, t_T=15 schedule"""
    sched = make_schedule(1000, 15.0)
    times = sched.times
    steps = np.diff(logit_survival(times))
    uniformity = float(np.abs(steps - steps.mean()).max())
    survival = np.exp(-times)
    reflection = float(np.abs(survival + survival[::-1] - 1.0).max())
    first = abs(times[0] - 3.059e-7) / 3.059e-7
    below = abs(int(np.sum(times < LOG2)) - sched.T // 2)
    black = PureDeathLaw(StateSpace(255)).forward_pmf(255, 15.0)[0]
    return [
        Check("schedule", "logit_uniformity", uniformity, 1e-12),
        Check("schedule", "reflection_identity", reflection, 1e-12),
        Check("schedule", "first_time_relative_error", first, 1e-3),
        Check("schedule", "half_below_log2", below, 0.5),
        Check("schedule", "blackout_at_horizon", 1.0 - black, 1e-4),
    ]


def _finite_difference_error(params, xt, k, target, sched, max_label, step=1e-4):
    """Relative (norm) error between backprop and central differences"""
    kind = LossKind.INSTANTANEOUS
    grads = mlp_backprop(params, xt, k, target, kind, sched, max_label)

    def loss():
        y, _ = mlp_forward(params, mlp_features(np.atleast_2d(xt), k, sched, max_label))
        weight = loss_weight(kind, sched.t(k - 1), sched.t(k))
        return float(np.sum(weight * (y - xlogy(np.atleast_2d(target), y))))

    numeric = []
    for arr in params.arrays():
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss()
            arr[idx] = orig - step
            down = loss()
            arr[idx] = orig
            fd[idx] = (up - down) / (2 * step)
        numeric.append(fd)

    exact = np.concatenate([g.ravel() for g in grads])
    approx = np.concatenate([g.ravel() for g in numeric])
    return float(np.linalg.norm(exact - approx) / np.linalg.norm(exact))


@suite("loss", order=40)
def loss_suite(max_label, rng):
    """Loss minimizers, weight limits and backprop against finite differences"""
    sched = make_schedule(1000, 15.0)
    k = 500
    argmin = 0.0
    for target in range(1, 33):
        root = brentq(
            lambda y: per_element_loss_grad(LossKind.INSTANTANEOUS, y, target, k, sched),
            target / 4.0,
            target * 4.0,
            xtol=1e-12,
        )
        argmin = max(argmin, abs(root - target))

    delta = 1e-4
    ratio = loss_weight(LossKind.FINITE_TIME, 1.0, 1.0 + delta) / loss_weight(
        LossKind.INSTANTANEOUS, 1.0, 1.0 + delta
    )

    small = make_schedule(20, 15.0)
    params = MlpParams.init([4, 6, 2], substream(0, VALIDATE_STREAM), scale=0.5)
    backprop = max(
        _finite_difference_error(params, np.array([3, 1]), step, np.array([2, 5]), small, 8)
        for step in (3, 10, 16)
    )
    return [
        Check("loss", "argmin_max_error", argmin, 1e-6),
        Check("loss", "weight_ratio_error", abs(ratio - 1.0), 1e-4),
        Check("loss", "backprop_relative_error", backprop, 1e-5),
    ]


@suite("score", order=50)
def score_suite(max_label, rng):
    """Closed-form score against the general discrete score, and its Gaussian limit"""
    size = min(max_label, MATRIX_CHECK_LABELS)
    law = PureDeathLaw(StateSpace(size))
    g = law.generator()
    worst = 0.0
    for t in (0.1, LOG2, 1.0, 3.0):
        for o in range(size + 1):
            probs = np.zeros(size + 1)
            probs[: o + 1] = law.forward_pmf(o, t)
            p_t = ctmc.Distribution(probs)
            for m in range(min(o, size - 1) + 1):
                general = ctmc.discrete_score(g, p_t, m, 0) / (m + 1)
                closed = law.score(o, m, t)
                worst = max(worst, abs(general - closed) / max(1.0, abs(closed)))
    return [
        Check("score", "specialization_relative_error", worst, 1e-12),
        Check("score", "gaussian_limit_relative_error", gaussian_score_gap(256, 1.0), 0.05),
    ]


@suite("kolmogorov", order=60)
def kolmogorov_suite(max_label, rng):
    """Forward and backward Kolmogorov residuals of the matrix exponential"""
    size = min(max_label, MATRIX_CHECK_LABELS)
    pure = max(ctmc.kolmogorov_residuals(ctmc.Generator.pure_death(size), 1.0))
    rates = substream(0, VALIDATE_STREAM).uniform(0.0, 1.0, size=(9, 9))
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=0))
    random = max(ctmc.kolmogorov_residuals(ctmc.Generator(rates), 0.5))
    return [
        Check("kolmogorov", "pure_death_residual", pure, 1e-6),
        Check("kolmogorov", "random_generator_residual", random, 1e-6),
    ]
