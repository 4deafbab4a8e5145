"""
Predictors of the reverse process

A predictor maps a corrupted state ``xt`` at schedule step ``k`` to strictly
positive values: either the expected number of missing counts
``E[X_0 - X_t | X_t]`` (pure death) or reverse transition rates (general
chains).
"""


from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp

import blackout.general_ctmc as ctmc
from blackout.exceptions import DomainError, InconsistencyError, ShapeError
from blackout.loss import LossKind, per_element_loss_grad
from blackout.pure_death import StateSpace, survival
from blackout.schedule import Schedule
from blackout.utils import inverse_softplus, log_binom_pmf, softplus

# lower clamp that keeps predictions strictly positive
POSITIVE_FLOOR = 1e-12

# number of non-state input features of the mlp (t_k / t_T and e^{-t_k})
TIME_FEATURES = 2


class DiscreteDataset(object):
    """Weighted items of a :class:`StateSpace`"""

    def __init__(self, space: StateSpace, items, weights=None):
        items = space.check(items, "dataset item")
        if items.ndim == 1:
            items = items[:, np.newaxis]
        if items.ndim != 2 or items.shape[0] == 0:
            raise DomainError("dataset must contain at least one item")
        if items.shape[1] != space.dims:
            raise ShapeError(f"dataset items have {items.shape[1]} components, expected {space.dims}")

        if weights is None:
            weights = np.ones(items.shape[0])
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (items.shape[0],):
            raise ShapeError(f"expected {items.shape[0]} weights, got {weights.shape}")
        if np.any(weights < 0) or not weights.sum() > 0:
            raise DomainError("dataset weights must be nonnegative and not all zero")

        self.space = space
        self.items = items
        self.weights = weights / weights.sum()

    def __len__(self):
        return self.items.shape[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = ctmc.sample_distribution(self.weights, rng, size)
        return self.items[idx]


def _as_batch(xt, dims: int) -> Tuple[np.ndarray, bool]:
    xt = np.asarray(xt)
    single = xt.ndim == 1
    if single:
        xt = xt[np.newaxis, :]
    if xt.ndim != 2 or xt.shape[1] != dims:
        raise ShapeError(f"expected states with {dims} components, got shape {xt.shape}")
    return xt, single


def _posterior_from_loglik(log_weights, loglik) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_post = np.log(log_weights)[np.newaxis, :] + loglik
    if np.any(np.all(np.isneginf(log_post), axis=1)):
        raise InconsistencyError("observation has zero likelihood under every dataset item")
    return np.exp(log_post - logsumexp(log_post, axis=1, keepdims=True))


def oracle_posterior(ds: DiscreteDataset, xt, t: float) -> np.ndarray:
    """Posterior weights of the dataset items given X_t = xt.

    Returns shape (J,) for a single state or (B, J) for a batch.
    """
    xt, single = _as_batch(xt, ds.space.dims)
    t = float(t)
    if not t >= 0:
        raise DomainError(f"t must be >= 0, got {t}")
    q, one_minus_q = survival(t)
    loglik = log_binom_pmf(
        xt[:, np.newaxis, :], ds.items[np.newaxis, :, :], q, one_minus_q
    ).sum(axis=2)
    post = _posterior_from_loglik(ds.weights, loglik)
    return post[0] if single else post


def oracle_predict(ds: DiscreteDataset, xt, t: float) -> np.ndarray:
    """Posterior mean of ``X_0 - X_t`` given X_t = xt"""
    post = oracle_posterior(ds, xt, t)
    return np.maximum(post @ ds.items - np.asarray(xt), POSITIVE_FLOOR)


@dataclass
class MlpParams:
    """Weights and biases of a tanh MLP with a softplus output layer"""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeError("mlp needs one bias per weight matrix")
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {idx} has weight {w.shape} and bias {b.shape}")
            if idx and w.shape[0] != self.weights[idx - 1].shape[1]:
                raise ShapeError(f"layer {idx} does not chain onto layer {idx - 1}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DomainError(f"layer {idx} has non-finite parameters")

    @property
    def sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @classmethod
    def init(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        scale: float = 0.1,
        output_bias: float = 0.0,
    ) -> "MlpParams":
        """Gaussian weights of standard deviation ``scale``, zero hidden biases"""
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeError(f"invalid layer sizes {list(sizes)}")
        weights = [rng.normal(0.0, scale, size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        biases[-1][:] = output_bias
        return cls(weights, biases)

    @classmethod
    def zeros(cls, sizes: Sequence[int], output_bias: float = 0.0) -> "MlpParams":
        weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        biases[-1][:] = output_bias
        return cls(weights, biases)

    def arrays(self) -> List[np.ndarray]:
        """All parameter arrays, layer by layer (weight then bias)"""
        res = []
        for w, b in zip(self.weights, self.biases):
            res.extend([w, b])
        return res

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def mlp_features(xt, k, sched: Schedule, max_label: int) -> np.ndarray:
    """Scaled states with ``t_k / t_T`` and ``e^{-t_k}`` appended"""
    xt = np.asarray(xt, dtype=float)
    t = np.broadcast_to(np.reshape(sched.t(k), (-1, 1)), (xt.shape[0], 1))
    return np.hstack([xt / max_label, t / sched.horizon, np.exp(-t)])


def mlp_forward(p: MlpParams, features: np.ndarray):
    """Return the outputs and the cache needed by :func:`mlp_backward`"""
    hidden = [features]
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        hidden.append(np.tanh(hidden[-1] @ w + b))
    z = hidden[-1] @ p.weights[-1] + p.biases[-1]
    return softplus(z), (hidden, z)


def mlp_backward(p: MlpParams, cache, dl_dy) -> List[np.ndarray]:
    """Gradients in the order of :meth:`MlpParams.arrays`"""
    hidden, z = cache
    delta = dl_dy * expit(z)
    grads = []
    for layer in range(len(p.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(hidden[layer].T @ delta)
        if layer:
            delta = (delta @ p.weights[layer].T) * (1.0 - hidden[layer] ** 2)
    grads.reverse()
    return grads


def _check_mlp_input(p: MlpParams, xt):
    xt, single = _as_batch(xt, p.sizes[0] - TIME_FEATURES)
    if p.output_dim != xt.shape[1]:
        raise ShapeError(f"mlp outputs {p.output_dim} values for {xt.shape[1]} components")
    return xt, single


def mlp_predict(p: MlpParams, xt, k, sched: Schedule, max_label: int) -> np.ndarray:
    """Strictly positive outputs for state(s) ``xt`` at step(s) ``k``"""
    xt, single = _check_mlp_input(p, xt)
    y, _ = mlp_forward(p, mlp_features(xt, k, sched, max_label))
    y = np.maximum(y, POSITIVE_FLOOR)
    return y[0] if single else y


def mlp_backprop(
    p: MlpParams, xt, k, target, kind: LossKind, sched: Schedule, max_label: int
) -> List[np.ndarray]:
    """Gradient of the per-element loss summed over components (and over the
    batch when ``xt`` is a batch).
    """
    xt, single = _check_mlp_input(p, xt)
    target = np.asarray(target, dtype=float)
    if single:
        target = target[np.newaxis, :]
    if target.shape != xt.shape:
        raise ShapeError(f"target shape {target.shape} does not match {xt.shape}")
    y, cache = mlp_forward(p, mlp_features(xt, k, sched, max_label))
    ks = np.reshape(k, (-1, 1))
    dl_dy = per_element_loss_grad(kind, np.maximum(y, POSITIVE_FLOOR), target, ks, sched)
    return mlp_backward(p, cache, dl_dy)


class Sgd(object):
    """Stochastic gradient descent with optional (heavy-ball) momentum"""

    def __init__(self, learning_rate: float, momentum: float = 0.0):
        if not learning_rate > 0:
            raise DomainError(f"learning rate must be > 0, got {learning_rate}")
        if not 0 <= momentum < 1:
            raise DomainError(f"momentum must be in [0, 1), got {momentum}")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self._velocity: Optional[List[np.ndarray]] = None

    def step(self, arrays: List[np.ndarray], grads: List[np.ndarray]):
        """Update ``arrays`` in place"""
        if self._velocity is None:
            self._velocity = [np.zeros_like(a) for a in arrays]
        for arr, grad, vel in zip(arrays, grads, self._velocity):
            vel *= self.momentum
            vel -= self.learning_rate * grad
            arr += vel


class Predictor(object):
    """Maps states at schedule step k to strictly positive predictions"""

    def predict(self, xt, k, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        raise NotImplementedError()


class TrainablePredictor(Predictor):
    """A predictor with parameters updated by gradient steps"""

    def parameters(self) -> List[np.ndarray]:
        raise NotImplementedError()

    def forward(self, xt, k):
        """Return ``(predictions, cache)`` for a batch"""
        raise NotImplementedError()

    def backward(self, cache, dl_dy) -> List[np.ndarray]:
        """Gradients of the parameters given d(loss)/d(predictions)"""
        raise NotImplementedError()


class OraclePredictor(Predictor):
    """Exact Bayes predictor of ``X_0 - X_t`` over a dataset.

    With ``posterior="mean"`` it returns the posterior mean; with
    ``posterior="sample"`` it returns ``x_j - xt`` for an item ``j`` drawn
    from the posterior, which turns bridge generation into exact ancestral
    sampling.
    """

    MODES = ("mean", "sample")

    def __init__(self, ds: DiscreteDataset, sched: Schedule, posterior: str = "mean"):
        if posterior not in self.MODES:
            raise DomainError(f"posterior mode must be one of {self.MODES}, got {posterior!r}")
        self.ds = ds
        self.sched = sched
        self.posterior = posterior

    def predict(self, xt, k, rng=None):
        t = self.sched.t(k)
        if self.posterior == "mean":
            return oracle_predict(self.ds, xt, t)
        if rng is None:
            raise DomainError("posterior sampling needs a random generator")
        xt_batch, single = _as_batch(xt, self.ds.space.dims)
        post = oracle_posterior(self.ds, xt_batch, t)
        cum = np.cumsum(post, axis=1)
        u = rng.random(post.shape[0]) * cum[:, -1]
        idx = np.argmax(cum > u[:, np.newaxis], axis=1)
        res = np.maximum(self.ds.items[idx] - xt_batch, POSITIVE_FLOOR)
        return res[0] if single else res


class MlpPredictor(TrainablePredictor):
    def __init__(self, params: MlpParams, sched: Schedule, max_label: int):
        self.params = params
        self.sched = sched
        self.max_label = max_label

    @classmethod
    def create(
        cls,
        space: StateSpace,
        sched: Schedule,
        hidden: Sequence[int],
        rng: np.random.Generator,
        scale: float = 0.1,
    ) -> "MlpPredictor":
        """A freshly initialised MLP for the states of ``space``"""
        sizes = [space.dims + TIME_FEATURES] + list(hidden) + [space.dims]
        return cls(MlpParams.init(sizes, rng, scale), sched, space.max_label)

    def predict(self, xt, k, rng=None):
        return mlp_predict(self.params, xt, k, self.sched, self.max_label)

    def parameters(self):
        return self.params.arrays()

    def forward(self, xt, k):
        xt, _ = _check_mlp_input(self.params, xt)
        y, cache = mlp_forward(self.params, mlp_features(xt, k, self.sched, self.max_label))
        return np.maximum(y, POSITIVE_FLOOR), cache

    def backward(self, cache, dl_dy):
        return mlp_backward(self.params, cache, dl_dy)


class RateTable(TrainablePredictor):
    """Lookup-table rate predictor for one transition type.

    The rate for component i is ``softplus(table[k, xt_i])``: one parameter
    per (schedule step, label), shared by all components.
    """

    def __init__(self, sched: Schedule, max_label: int, initial_rate: float = float(np.log(2.0))):
        self.sched = sched
        self.max_label = max_label
        self.table = np.full((sched.T + 1, max_label + 1), float(inverse_softplus(initial_rate)))

    def _index(self, xt, k):
        xt = np.asarray(xt)
        if xt.size and (xt.min() < 0 or xt.max() > self.max_label):
            raise DomainError(f"state outside 0..{self.max_label}")
        k = np.asarray(k)
        if np.any(k < 1) or np.any(k > self.sched.T):
            raise DomainError(f"schedule index outside 1..{self.sched.T}")
        if xt.ndim == 2 and k.ndim == 1:
            k = k[:, np.newaxis]
        return np.broadcast_to(k, xt.shape), xt

    def rates(self, xt, k) -> np.ndarray:
        rows, cols = self._index(xt, k)
        return softplus(self.table[rows, cols])

    def predict(self, xt, k, rng=None):
        return np.maximum(self.rates(xt, k), POSITIVE_FLOOR)

    def parameters(self):
        return [self.table]

    def forward(self, xt, k):
        rows, cols = self._index(xt, k)
        theta = self.table[rows, cols]
        return np.maximum(softplus(theta), POSITIVE_FLOOR), (rows, cols, theta)

    def backward(self, cache, dl_dy):
        rows, cols, theta = cache
        grad = np.zeros_like(self.table)
        np.add.at(grad, (rows, cols), dl_dy * expit(theta))
        return [grad]


class OracleRatePredictor(Predictor):
    """Exact reverse rate of transition type ``r`` for data drawn from a
    dataset and pushed through a general chain.
    """

    def __init__(self, ds: DiscreteDataset, g: ctmc.Generator, sched: Schedule, r: int):
        if g.max_label != ds.space.max_label:
            raise DomainError("generator and dataset disagree on the label set")
        if not 0 <= r < g.num_transitions:
            raise DomainError(f"unknown transition id {r}")
        self.ds = ds
        self.generator = g
        self.sched = sched
        self.r = r
        self.transitions = ctmc.TransitionCache(g, sched.grid)

    def predict(self, xt, k, rng=None):
        xt, single = _as_batch(xt, self.ds.space.dims)
        mat = self.transitions(int(k))
        items = self.ds.items[np.newaxis, :, :]
        here = mat[xt[:, np.newaxis, :], items]
        with np.errstate(divide="ignore"):
            post = _posterior_from_loglik(self.ds.weights, np.log(here).sum(axis=2))

        source = xt - self.generator.displacements[self.r]
        inside = (source >= 0) & (source <= self.generator.max_label)
        source = np.where(inside, source, 0)
        nu = np.where(inside, self.generator.jump_rates[self.r][source], 0.0)
        there = mat[source[:, np.newaxis, :], items]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(here > 0, there / here, 0.0)
        rates = nu * np.einsum("bj,bji->bi", post, ratio)
        res = np.maximum(rates, POSITIVE_FLOOR)
        return res[0] if single else res
