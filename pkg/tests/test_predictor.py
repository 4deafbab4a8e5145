"""
Test the reverse-process predictors
"""


import numpy as np
import pytest

import blackout.general_ctmc as ctmc
from blackout.exceptions import DomainError, InconsistencyError, ShapeError
from blackout.loss import LossKind, per_element_loss
from blackout.predictor import (
    POSITIVE_FLOOR,
    DiscreteDataset,
    MlpParams,
    MlpPredictor,
    OraclePredictor,
    OracleRatePredictor,
    RateTable,
    Sgd,
    mlp_backprop,
    mlp_predict,
    oracle_posterior,
    oracle_predict,
)
from blackout.pure_death import PureDeathLaw, StateSpace
from blackout.schedule import make_schedule
from blackout.utils import inverse_softplus
from tests.utils import make_dataset


def test_dataset_validation():
    """Test dataset construction and weight normalisation"""
    ds = make_dataset([1, 3, 6], 8, weights=[1, 1, 2])
    np.testing.assert_allclose(ds.weights, [0.25, 0.25, 0.5])
    assert len(ds) == 3
    assert ds.items.shape == (3, 1)
    assert ds.sample(np.random.default_rng(0), 10).shape == (10, 1)

    with pytest.raises(DomainError):
        make_dataset([1, 9], 8)
    with pytest.raises(DomainError):
        make_dataset([1, 2], 8, weights=[1, -1])
    with pytest.raises(ShapeError):
        DiscreteDataset(StateSpace(8, 2), [[1, 2, 3]])


def test_oracle_singleton():
    """Test that a single item is predicted exactly"""
    ds = make_dataset([[5, 2, 7]], 8)
    np.testing.assert_array_equal(oracle_predict(ds, [3, 0, 7], 0.9), [2, 2, POSITIVE_FLOOR])


def test_oracle_two_items_by_hand():
    """Test the posterior mean of a two-item dataset at t = log 2"""
    ds = make_dataset([2, 4], 8)
    np.testing.assert_allclose(oracle_posterior(ds, [2], np.log(2.0)), [0.4, 0.6], rtol=1e-12)
    assert oracle_predict(ds, [2], np.log(2.0))[0] == pytest.approx(1.2, rel=1e-12)


def test_oracle_large_time_limit():
    """Test that the posterior reverts to the dataset weights at large t"""
    ds = make_dataset([2, 3, 4], 8)
    assert oracle_predict(ds, [0], 15.0)[0] == pytest.approx(3.0, abs=1e-6)


def test_oracle_excludes_impossible_items():
    """Test that items below the observation get no posterior weight"""
    ds = make_dataset([[0, 0], [8, 8]], 8)
    np.testing.assert_array_equal(oracle_predict(ds, [1, 0], 2.0), [7, 8])

    with pytest.raises(InconsistencyError):
        oracle_predict(make_dataset([2, 3], 8), [5], 1.0)
    with pytest.raises(InconsistencyError):
        oracle_predict(make_dataset([2, 3], 8), [1], 0.0)


def test_oracle_posterior_batch():
    """Test that batched posterior rows are normalised"""
    ds = make_dataset([[1, 4], [3, 3], [6, 0], [8, 8]], 8)
    xt = np.array([[0, 0], [1, 0], [0, 3], [1, 2]])
    post = oracle_posterior(ds, xt, 0.7)
    assert post.shape == (4, 4)
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)


def test_oracle_beats_constant_predictions():
    """Test that the posterior mean minimizes the expected loss"""
    sched = make_schedule(50, 15.0)
    ds = make_dataset([1, 3, 6], 8)
    for k in (10, 25, 40):
        for xt in (0, 1, 3):
            post = oracle_posterior(ds, [xt], sched.t(k))
            targets = ds.items[:, 0] - xt

            def expected_loss(y):
                return sum(
                    w * per_element_loss("inst", y, max(c, 0), k, sched) for w, c in zip(post, targets) if w > 0
                )

            best = expected_loss(oracle_predict(ds, [xt], sched.t(k))[0])
            for c in np.linspace(0.01, 10.0, 200):
                assert best <= expected_loss(c) + 1e-12


def test_oracle_predictor_modes():
    """Test the posterior mean and posterior sampling modes"""
    sched = make_schedule(10, 15.0)
    ds = make_dataset([[4, 1]], 8)
    rng = np.random.default_rng(0)
    mean = OraclePredictor(ds, sched)
    sample = OraclePredictor(ds, sched, posterior="sample")
    np.testing.assert_array_equal(mean.predict([2, 1], 5), [2, POSITIVE_FLOOR])
    np.testing.assert_array_equal(sample.predict(np.array([[2, 1], [0, 0]]), 5, rng), [[2, POSITIVE_FLOOR], [4, 1]])

    with pytest.raises(DomainError):
        sample.predict([2, 1], 5)
    with pytest.raises(DomainError):
        OraclePredictor(ds, sched, posterior="mode")


def test_mlp_params_validation():
    """Test shape checks and parameter ordering of MLP parameters"""
    params = MlpParams.init([3, 5, 1], np.random.default_rng(0))
    assert params.sizes == [3, 5, 1]
    assert [a.shape for a in params.arrays()] == [(3, 5), (5,), (5, 1), (1,)]
    clone = params.copy()
    clone.weights[0][0, 0] += 1.0
    assert clone.weights[0][0, 0] != params.weights[0][0, 0]

    with pytest.raises(ShapeError):
        MlpParams([np.zeros((3, 5))], [np.zeros(4)])
    with pytest.raises(ShapeError):
        MlpParams([np.zeros((3, 5)), np.zeros((4, 1))], [np.zeros(5), np.zeros(1)])
    with pytest.raises(DomainError):
        MlpParams([np.full((3, 1), np.nan)], [np.zeros(1)])


def test_mlp_predict():
    """Test constant output with zero weights and positivity in general"""
    sched = make_schedule(20, 15.0)
    zeros = MlpParams.zeros([4, 6, 2], output_bias=0.5)
    np.testing.assert_allclose(mlp_predict(zeros, [3, 8], 7, sched, 8), np.log1p(np.exp(0.5)))

    rng = np.random.default_rng(1)
    params = MlpParams.init([4, 16, 16, 2], rng, scale=3.0)
    xt = rng.integers(0, 9, size=(10000, 2))
    ks = rng.integers(1, 21, size=10000)
    y = mlp_predict(params, xt, ks, sched, 8)
    assert y.shape == (10000, 2)
    assert np.all(y > 0)

    with pytest.raises(ShapeError):
        mlp_predict(params, [1, 2, 3], 4, sched, 8)


def _summed_loss(params, xt, k, target, kind, sched):
    y = mlp_predict(params, xt, k, sched, 8)
    return float(np.sum(per_element_loss(kind, y, target, k, sched)))


def test_mlp_backprop_finite_differences():
    """Test backprop against central differences at three (k, target) pairs"""
    sched = make_schedule(20, 15.0)
    params = MlpParams.init([4, 6, 2], np.random.default_rng(2), scale=0.5)
    xt = np.array([3, 1])
    step = 1e-4
    for kind, k, target in (
        (LossKind.INSTANTANEOUS, 3, np.array([2, 5])),
        (LossKind.FINITE_TIME, 10, np.array([0, 4])),
        (LossKind.INSTANTANEOUS, 16, np.array([5, 7])),
    ):
        grads = mlp_backprop(params, xt, k, target, kind, sched, 8)
        numeric = []
        for arr in params.arrays():
            fd = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + step
                up = _summed_loss(params, xt, k, target, kind, sched)
                arr[idx] = orig - step
                down = _summed_loss(params, xt, k, target, kind, sched)
                arr[idx] = orig
                fd[idx] = (up - down) / (2 * step)
            numeric.append(fd)
        exact = np.concatenate([g.ravel() for g in grads])
        approx = np.concatenate([g.ravel() for g in numeric])
        assert np.linalg.norm(exact - approx) < 1e-5 * np.linalg.norm(exact)


def test_mlp_backprop_stationary_at_target():
    """Test that the gradient vanishes when the output equals the target"""
    sched = make_schedule(20, 15.0)
    params = MlpParams.zeros([3, 4, 1], output_bias=float(inverse_softplus(5.0)))
    grads = mlp_backprop(params, [2], 8, [5], "inst", sched, 8)
    for grad in grads:
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)


def test_sgd_momentum():
    """Test heavy-ball updates"""
    arr = np.array([1.0, 2.0])
    opt = Sgd(0.1, momentum=0.5)
    opt.step([arr], [np.array([0.5, -1.0])])
    np.testing.assert_allclose(arr, [0.95, 2.1])
    opt.step([arr], [np.array([0.5, -1.0])])
    np.testing.assert_allclose(arr, [0.875, 2.25])

    with pytest.raises(DomainError):
        Sgd(0.0)
    with pytest.raises(DomainError):
        Sgd(0.1, momentum=1.0)


def test_mlp_predictor_create():
    """Test the layer sizes of a fresh MLP predictor"""
    sched = make_schedule(20, 15.0)
    pred = MlpPredictor.create(StateSpace(8, 3), sched, [7, 5], np.random.default_rng(3))
    assert pred.params.sizes == [5, 7, 5, 3]
    y, cache = pred.forward(np.array([[1, 2, 3], [0, 0, 8]]), np.array([4, 20]))
    assert y.shape == (2, 3)
    grads = pred.backward(cache, np.ones_like(y))
    assert [g.shape for g in grads] == [a.shape for a in pred.parameters()]


def test_rate_table():
    """Test the lookup-table rate predictor"""
    sched = make_schedule(10, 15.0)
    table = RateTable(sched, 4)
    assert table.table.shape == (11, 5)
    np.testing.assert_allclose(table.predict(np.array([[0, 4]]), np.array([3])), np.log(2.0))

    y, cache = table.forward(np.array([[2, 2], [1, 2]]), np.array([3, 5]))
    grad = table.backward(cache, np.ones_like(y))[0]
    # d softplus / d theta is 1 - e^{-rate} = 1/2 at rate log 2
    assert grad[3, 2] == pytest.approx(1.0)
    assert grad[5, 1] == pytest.approx(0.5)
    assert grad[5, 2] == pytest.approx(0.5)
    assert grad.sum() == pytest.approx(2.0)

    with pytest.raises(DomainError):
        table.predict(np.array([[5]]), np.array([1]))
    with pytest.raises(DomainError):
        table.predict(np.array([[1]]), np.array([0]))


def test_oracle_rate_predictor_pure_death():
    """Test the exact reverse rate of the pure-death chain against its closed
    form
    """
    sched = make_schedule(10, 15.0)
    ds = make_dataset([6], 8)
    g = ctmc.Generator.pure_death(8)
    pred = OracleRatePredictor(ds, g, sched, 0)
    law = PureDeathLaw(StateSpace(8))
    for k in (2, 5, 9):
        rates = pred.predict(np.arange(7)[:, np.newaxis], k)[:, 0]
        expected = law.reverse_rate(6, np.arange(7), sched.t(k))
        np.testing.assert_allclose(rates[:6], expected[:6], rtol=1e-9)
        assert rates[6] == POSITIVE_FLOOR

    with pytest.raises(DomainError):
        OracleRatePredictor(ds, g, sched, 1)
    with pytest.raises(DomainError):
        OracleRatePredictor(ds, ctmc.Generator.pure_death(6), sched, 0)
