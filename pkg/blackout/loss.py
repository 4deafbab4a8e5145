"""
Training objectives

Both pure-death objectives have the Poisson-likelihood form
``w * (y - target * log y)`` whose minimizer over y > 0 is ``y = target``.
They differ only in the per-step weight ``w``.
"""


import enum
import math

import numpy as np
from scipy.special import xlogy

from blackout.exceptions import DomainError, ShapeError
from blackout.schedule import Schedule


class LossKind(enum.Enum):
    INSTANTANEOUS = "inst"
    FINITE_TIME = "finite"
    GENERAL = "general"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise DomainError(f"unknown loss kind {value!r}")


def loss_weight(kind: LossKind, t_prev, t_cur):
    """Per-step weight between observation times ``t_prev < t_cur``"""
    kind = LossKind.parse(kind)
    t_prev = np.asarray(t_prev, dtype=float)
    t_cur = np.asarray(t_cur, dtype=float)
    dt = t_cur - t_prev
    if kind is LossKind.INSTANTANEOUS:
        res = dt * np.exp(-t_cur)
    elif kind is LossKind.FINITE_TIME:
        res = -np.exp(-t_prev) * np.expm1(-dt)
    else:
        res = -dt * np.expm1(-t_cur)
    return float(res) if res.ndim == 0 else res


def schedule_weight(kind: LossKind, k, sched: Schedule):
    """The weight of schedule step k"""
    return loss_weight(kind, sched.t(np.asarray(k) - 1), sched.t(k))


def _check_positive(y):
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("predictions must be strictly positive")
    return y


def _pure_death_kind(kind):
    kind = LossKind.parse(kind)
    if kind is LossKind.GENERAL:
        raise DomainError("the general objective is computed with general_loss")
    return kind


def per_element_loss(kind: LossKind, y, target, k, sched: Schedule):
    """``w_k * (y - target * log y)``; the log term is skipped where the
    target is 0.
    """
    kind = _pure_death_kind(kind)
    y = _check_positive(y)
    weight = schedule_weight(kind, k, sched)
    res = weight * (y - xlogy(target, y))
    return float(res) if np.ndim(res) == 0 else res


def per_element_loss_grad(kind: LossKind, y, target, k, sched: Schedule):
    """Derivative of :func:`per_element_loss` with respect to y"""
    kind = _pure_death_kind(kind)
    y = _check_positive(y)
    weight = schedule_weight(kind, k, sched)
    return weight * (1.0 - np.asarray(target) / y)


def excess_loss(kind: LossKind, y, target, k, sched: Schedule):
    """Loss minus its minimum over y (attained at y = target), so >= 0"""
    kind = _pure_death_kind(kind)
    y = _check_positive(y)
    target = np.asarray(target, dtype=float)
    weight = schedule_weight(kind, k, sched)
    best = target - xlogy(target, target)
    return weight * (y - xlogy(target, y) - best)


def _batch_arrays(predictions, x0, xt, ks):
    predictions = np.asarray(predictions, dtype=float)
    x0 = np.asarray(x0)
    xt = np.asarray(xt)
    ks = np.asarray(ks)
    if predictions.ndim != 2 or predictions.shape != x0.shape or x0.shape != xt.shape:
        raise ShapeError(
            f"batch shapes disagree: predictions {predictions.shape}, "
            f"x0 {x0.shape}, xt {xt.shape}"
        )
    if ks.shape != (predictions.shape[0],):
        raise ShapeError(f"expected {predictions.shape[0]} step indices, got {ks.shape}")
    return predictions, x0 - xt, ks[:, np.newaxis]


def batch_loss(kind: LossKind, predictions, x0, xt, ks, sched: Schedule, exact_sum: bool = True) -> float:
    """Mean per-element loss over a batch of shape (B, N).

    With ``exact_sum`` the mean is accumulated with ``math.fsum`` so the
    result does not depend on the order of the batch.
    """
    predictions, target, ks = _batch_arrays(predictions, x0, xt, ks)
    values = per_element_loss(kind, predictions, target, ks, sched)
    if exact_sum:
        return math.fsum(np.ravel(values)) / values.size
    return float(np.mean(values))


def batch_loss_grad(kind: LossKind, predictions, x0, xt, ks, sched: Schedule) -> np.ndarray:
    """Gradient of :func:`batch_loss` with respect to the predictions"""
    predictions, target, ks = _batch_arrays(predictions, x0, xt, ks)
    return per_element_loss_grad(kind, predictions, target, ks, sched) / predictions.size


def general_loss(kappa, lam, dt) -> float:
    """``sum dt * (kappa - lam * log kappa)`` over transitions"""
    kappa = _check_positive(kappa)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("exact reverse rates must be nonnegative")
    return float(np.sum(dt * (kappa - xlogy(lam, kappa))))


def general_loss_grad(kappa, lam, dt):
    """Elementwise derivative of :func:`general_loss` with respect to kappa"""
    kappa = _check_positive(kappa)
    return dt * (1.0 - np.asarray(lam, dtype=float) / kappa)
