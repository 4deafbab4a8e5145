"""
Defines utilities for testing blackout
"""


import numpy as np

import blackout.config
import blackout.general_ctmc as ctmc
from blackout.pure_death import StateSpace
from blackout.predictor import DiscreteDataset


def setup_blackout(mocker):
    mocker.patch.object(blackout.config, "LOG")


def random_generator(max_label, seed=0, scale=1.0):
    """A dense generator with uniformly random off-diagonal rates"""
    rng = np.random.default_rng(seed)
    rates = rng.uniform(0.0, scale, size=(max_label + 1, max_label + 1))
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=0))
    return ctmc.Generator(rates)


def birth_death(max_label=8, birth=1.0, death=1.0):
    """Birth at constant rate, death at rate proportional to the count"""
    return ctmc.Generator.birth_death(max_label, birth, death)


def make_dataset(items, max_label, weights=None):
    items = np.asarray(items)
    dims = 1 if items.ndim == 1 else items.shape[1]
    return DiscreteDataset(StateSpace(max_label, dims), items, weights)


def empirical(samples, num_labels):
    samples = np.asarray(samples).ravel()
    return np.bincount(samples, minlength=num_labels) / samples.size


def tv(p, q):
    size = max(len(p), len(q))
    p = np.pad(np.asarray(p, dtype=float), (0, size - len(p)))
    q = np.pad(np.asarray(q, dtype=float), (0, size - len(q)))
    return 0.5 * np.abs(p - q).sum()
