"""
Training and generation loops

``train`` / ``generate`` handle the pure-death process with a predictor of
the missing counts ``X_0 - X_t``; ``train_general`` / ``generate_tau_leaping``
handle an arbitrary generator with one rate predictor per transition type.
"""


import copy
import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import xlogy

import blackout.config as config
import blackout.general_ctmc as ctmc
from blackout.exceptions import DomainError, ShapeError
from blackout.loss import (
    LossKind,
    batch_loss,
    batch_loss_grad,
    excess_loss,
    general_loss,
    general_loss_grad,
    schedule_weight,
)
from blackout.predictor import DiscreteDataset, Predictor, Sgd, TrainablePredictor
from blackout.pure_death import PureDeathLaw, StateSpace
from blackout.rng import GENERATE_STREAM, TRAIN_STREAM, substream
from blackout.schedule import Schedule, make_schedule


class Sampler(enum.Enum):
    BRIDGE = "bridge"
    POISSON = "poisson"
    TAU = "tau"


@dataclass
class TrainConfig:
    seed: int
    loss: LossKind = LossKind.INSTANTANEOUS
    batch_size: int = 64
    iterations: int = 1000
    learning_rate: float = 0.05
    momentum: float = 0.0
    T: int = 1000
    horizon: float = 15.0
    hidden: List[int] = field(default_factory=lambda: [32])
    init_scale: float = 0.1
    log_every: int = 100

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)
        if self.batch_size < 1:
            raise DomainError(f"batch size must be >= 1, got {self.batch_size}")
        if self.iterations < 0:
            raise DomainError(f"iterations must be >= 0, got {self.iterations}")
        if self.T < 2:
            raise DomainError(f"T must be >= 2, got {self.T}")
        if self.log_every < 1:
            raise DomainError(f"log_every must be >= 1, got {self.log_every}")

    def schedule(self) -> Schedule:
        return make_schedule(self.T, self.horizon)


@dataclass
class GenConfig:
    seed: int
    sampler: Sampler = Sampler.BRIDGE
    count: int = 1
    # multiply Poisson means by the step length t_k - t_{k-1}
    poisson_dt: bool = True
    block_size: int = 256
    threads: int = 1

    def __post_init__(self):
        if not isinstance(self.sampler, Sampler):
            try:
                self.sampler = Sampler(self.sampler)
            except ValueError:
                raise DomainError(f"unknown sampler {self.sampler!r}")
        if self.count < 1:
            raise DomainError(f"count must be >= 1, got {self.count}")
        if self.block_size < 1 or self.threads < 1:
            raise DomainError("block size and threads must be >= 1")


@dataclass
class TrainTrace:
    """Per-iteration training loss and its excess over the loss at the exact
    targets (always >= 0).
    """

    loss: np.ndarray
    excess: np.ndarray

    def window_means(self, size: int, values: str = "excess") -> np.ndarray:
        arr = getattr(self, values)
        full = arr.size // size
        return arr[: full * size].reshape(full, size).mean(axis=1)

    def to_rows(self) -> List[Tuple[int, float, float]]:
        return [(i + 1, float(a), float(b)) for i, (a, b) in enumerate(zip(self.loss, self.excess))]


def _check_schedule(predictor, sched: Schedule):
    own = getattr(predictor, "sched", None)
    if own is not None and own.T != sched.T:
        raise DomainError(f"predictor was built for T={own.T}, config has T={sched.T}")


def train(
    ds: DiscreteDataset, predictor: TrainablePredictor, cfg: TrainConfig
) -> Tuple[TrainablePredictor, TrainTrace]:
    """Fit ``predictor`` to ``E[X_0 - X_t | X_t]`` by stochastic gradient
    steps on the weighted Poisson-likelihood loss.

    The input predictor is left untouched; a trained copy is returned.
    """
    sched = cfg.schedule()
    _check_schedule(predictor, sched)
    predictor = copy.deepcopy(predictor)
    log = config.get_log()

    rng = substream(cfg.seed, TRAIN_STREAM)
    opt = Sgd(cfg.learning_rate, cfg.momentum)
    params = predictor.parameters()
    survival = np.exp(-np.asarray(sched.grid))

    losses = np.zeros(cfg.iterations)
    excess = np.zeros(cfg.iterations)
    for it in range(cfg.iterations):
        x0 = ds.sample(rng, cfg.batch_size)
        ks = rng.integers(1, sched.T + 1, size=cfg.batch_size)
        xt = rng.binomial(x0, survival[ks][:, np.newaxis])

        y, cache = predictor.forward(xt, ks)
        losses[it] = batch_loss(cfg.loss, y, x0, xt, ks, sched)
        excess[it] = np.mean(excess_loss(cfg.loss, y, x0 - xt, ks[:, np.newaxis], sched))
        grads = predictor.backward(cache, batch_loss_grad(cfg.loss, y, x0, xt, ks, sched))
        opt.step(params, grads)

        if (it + 1) % cfg.log_every == 0:
            log.info(f"train iteration {it + 1}/{cfg.iterations}: loss={losses[it]:.6g}")

    return predictor, TrainTrace(losses, excess)


def death_rate_factor(sched: Schedule, k: int) -> float:
    """``e^{-t_k} / (1 - e^{-t_k})``, the per-count reverse rate at t_k"""
    return float(1.0 / np.expm1(sched.t(k)))


def _block_sizes(cfg: GenConfig) -> List[int]:
    full, rest = divmod(cfg.count, cfg.block_size)
    return [cfg.block_size] * full + ([rest] if rest else [])


def _run_blocks(block_fn: Callable, cfg: GenConfig, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Run ``block_fn(size, rng)`` over all blocks of samples.

    Without an explicit ``rng`` every block gets its own stream derived from
    the seed and the block index, so the result does not depend on the
    number of threads.
    """
    sizes = _block_sizes(cfg)
    log = config.get_log()
    if rng is not None:
        results = [block_fn(size, rng) for size in sizes]
    else:
        streams = [substream(cfg.seed, GENERATE_STREAM, idx) for idx in range(len(sizes))]
        if cfg.threads == 1:
            results = [block_fn(size, stream) for size, stream in zip(sizes, streams)]
        else:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                results = list(pool.map(block_fn, sizes, streams))
    log.info(f"generated {cfg.count} samples in {len(sizes)} blocks")
    return np.concatenate(results, axis=0)


def _generate_block(
    predictor: Predictor,
    space: StateSpace,
    sched: Schedule,
    cfg: GenConfig,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    max_label = space.max_label
    law = PureDeathLaw(space)
    x = np.zeros((size, space.dims), dtype=np.int64)
    for k in range(sched.T, 0, -1):
        y = predictor.predict(x, k, rng)
        y = np.rint(np.clip(y, 0, max_label - x)).astype(np.int64)
        if cfg.sampler is Sampler.BRIDGE:
            r = law.bridge_probability(sched.t(k - 1), sched.t(k))
            x = x + rng.binomial(y, r)
        else:
            lam = y * death_rate_factor(sched, k)
            if cfg.poisson_dt:
                lam = lam * sched.delta(k)
            x = np.minimum(x + rng.poisson(lam), max_label)
    return x


def generate(
    predictor: Predictor,
    space: StateSpace,
    sched: Schedule,
    cfg: GenConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Generate ``cfg.count`` samples of shape (count, dims) starting from the
    all-zero state at ``t_T``.
    """
    if cfg.sampler is Sampler.TAU:
        raise DomainError("the tau-leaping sampler runs through generate_tau_leaping")
    block_fn = partial(_generate_block, predictor, space, sched, cfg)
    return _run_blocks(block_fn, cfg, rng)


class DeathRateAdapter(Predictor):
    """Turns a predictor of ``X_0 - X_t`` into the pure-death reverse-rate
    predictor used by :func:`generate_tau_leaping`.
    """

    def __init__(self, predictor: Predictor, space: StateSpace, sched: Schedule):
        self.predictor = predictor
        self.space = space
        self.sched = sched

    def predict(self, xt, k, rng=None):
        xt = np.asarray(xt)
        y = self.predictor.predict(xt, k, rng)
        y = np.rint(np.clip(y, 0, self.space.max_label - xt)).astype(np.int64)
        return y * death_rate_factor(self.sched, k)


def prior_distribution(g: ctmc.Generator, sched: Schedule) -> ctmc.Distribution:
    """Law at ``t_T`` of the chain started at 0"""
    return ctmc.forward_solve(g, ctmc.Distribution.point_mass(g.max_label, 0), sched.horizon)


def _tau_block(
    predictors: Sequence[Predictor],
    g: ctmc.Generator,
    space: StateSpace,
    sched: Schedule,
    cfg: GenConfig,
    prior: ctmc.Distribution,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    max_label = space.max_label
    support = np.flatnonzero(prior.probs)
    if support.size == 1:
        x = np.full((size, space.dims), support[0], dtype=np.int64)
    else:
        x = ctmc.sample_distribution(prior, rng, (size, space.dims))

    for k in range(sched.T, 0, -1):
        counts = []
        for pred in predictors:
            lam = pred.predict(x, k, rng)
            if cfg.poisson_dt:
                lam = lam * sched.delta(k)
            counts.append(rng.poisson(lam))
        # reversing a transition of displacement d moves the state by -d
        for disp, n in zip(g.displacements, counts):
            x = np.clip(x - disp * n, 0, max_label)
    return x


def generate_tau_leaping(
    predictors: Sequence[Predictor],
    g: ctmc.Generator,
    space: StateSpace,
    sched: Schedule,
    cfg: GenConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Generate samples by tau-leaping the learned reverse process.

    ``predictors[r]`` predicts the reverse rate of transition type r. Jumps
    that would leave the state space are clipped to its boundary.
    """
    if len(predictors) != g.num_transitions:
        raise ShapeError(f"need {g.num_transitions} rate predictors, got {len(predictors)}")
    if g.max_label != space.max_label:
        raise DomainError("generator and state space disagree on the label set")
    block_fn = partial(_tau_block, predictors, g, space, sched, cfg, prior_distribution(g, sched))
    return _run_blocks(block_fn, cfg, rng)


def _sample_forward_general(probs_cols: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(probs_cols, axis=-1)
    u = rng.random(cum.shape[:-1]) * cum[..., -1]
    return np.argmax(cum > u[..., np.newaxis], axis=-1)


def train_general(
    ds: DiscreteDataset,
    g: ctmc.Generator,
    predictors: Sequence[TrainablePredictor],
    cfg: TrainConfig,
) -> Tuple[List[TrainablePredictor], TrainTrace]:
    """Fit one rate predictor per transition type to the exact reverse rates
    of ``g`` by stochastic gradient steps on the general objective.

    Returns trained copies of the predictors and the loss trace.
    """
    if len(predictors) != g.num_transitions:
        raise ShapeError(f"need {g.num_transitions} rate predictors, got {len(predictors)}")
    if g.max_label != ds.space.max_label:
        raise DomainError("generator and dataset disagree on the label set")
    sched = cfg.schedule()
    for pred in predictors:
        _check_schedule(pred, sched)
    predictors = [copy.deepcopy(pred) for pred in predictors]
    log = config.get_log()

    rng = substream(cfg.seed, TRAIN_STREAM)
    optimizers = [Sgd(cfg.learning_rate, cfg.momentum) for _ in predictors]
    transitions = ctmc.TransitionCache(g, sched.grid)
    weights = np.concatenate([[0.0], schedule_weight(LossKind.GENERAL, np.arange(1, sched.T + 1), sched)])
    deltas = np.diff(np.asarray(sched.grid), prepend=0.0)
    displacements = np.asarray(g.displacements)

    batch, dims = cfg.batch_size, ds.space.dims
    rows = np.arange(batch)[:, np.newaxis]
    losses = np.zeros(cfg.iterations)
    excess = np.zeros(cfg.iterations)
    for it in range(cfg.iterations):
        x0 = ds.sample(rng, batch)
        ks = rng.integers(1, sched.T + 1, size=batch)
        rs = rng.integers(0, g.num_transitions, size=batch)

        # law of X_t given X_0 for every component, shape (B, N, M+1)
        mats = np.stack([transitions(int(k)) for k in ks])
        cols = mats[rows, :, x0]
        xt = _sample_forward_general(cols, rng)

        source = xt - displacements[rs][:, np.newaxis]
        inside = (source >= 0) & (source <= g.max_label)
        source = np.where(inside, source, 0)
        nu = np.where(inside, g.jump_rates[rs[:, np.newaxis], source], 0.0)
        cols_idx = np.arange(dims)[np.newaxis, :]
        lam = nu * cols[rows, cols_idx, source] / cols[rows, cols_idx, xt]

        total = 0.0
        total_excess = 0.0
        for r, pred in enumerate(predictors):
            sel = np.flatnonzero(rs == r)
            if not sel.size:
                continue
            y, cache = pred.forward(xt[sel], ks[sel])
            w = weights[ks[sel]][:, np.newaxis]
            dt = deltas[ks[sel]][:, np.newaxis]
            total += general_loss(y, lam[sel], w * dt)
            total_excess += float(np.sum(w * dt * (y - xlogy(lam[sel], y) - lam[sel] + xlogy(lam[sel], lam[sel]))))
            dl_dy = w * general_loss_grad(y, lam[sel], dt) / (batch * dims)
            optimizers[r].step(pred.parameters(), pred.backward(cache, dl_dy))
        losses[it] = total / (batch * dims)
        excess[it] = total_excess / (batch * dims)

        if (it + 1) % cfg.log_every == 0:
            log.info(f"train_general iteration {it + 1}/{cfg.iterations}: loss={losses[it]:.6g}")

    return predictors, TrainTrace(losses, excess)
