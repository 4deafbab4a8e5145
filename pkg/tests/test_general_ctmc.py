"""
Test general continuous-time Markov chains
"""


import numpy as np
import pytest

import blackout.general_ctmc as ctmc
from blackout.exceptions import DomainError, ShapeError, UnreachableStateError
from blackout.pure_death import PureDeathLaw, StateSpace
from tests.utils import birth_death, empirical, random_generator, tv


def _pure_death_pmf(o, t, max_label):
    res = np.zeros(max_label + 1)
    res[: o + 1] = PureDeathLaw(StateSpace(max_label)).forward_pmf(o, t)
    return res


def test_pure_death_generator_is_banded():
    """Test the pure-death generator against its banded closed form"""
    g = ctmc.generator_from_transitions([ctmc.Transition(1, -1, lambda m: float(m))], 6)
    expected = np.zeros((7, 7))
    for m_prime in range(7):
        expected[m_prime, m_prime] = -m_prime
        if m_prime:
            expected[m_prime - 1, m_prime] = m_prime
    np.testing.assert_array_equal(g.rates, expected)
    np.testing.assert_array_equal(ctmc.Generator.pure_death(6).rates, expected)
    assert g.displacements == (-1,)
    assert g.jump_rate(0, 4) == 4.0


def test_empty_transitions_freeze_the_chain():
    """Test that no transitions give the zero generator"""
    g = ctmc.generator_from_transitions([], 3)
    np.testing.assert_array_equal(g.rates, np.zeros((4, 4)))
    assert g.num_transitions == 0
    p0 = ctmc.Distribution([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(ctmc.forward_solve(g, p0, 5.0).probs, p0.probs)


def test_birth_death_generator():
    """Test a birth-death generator against a hand-assembled matrix"""
    g = birth_death(4, birth=2.0, death=0.5)
    expected = np.array(
        [
            [-2.0, 0.5, 0.0, 0.0, 0.0],
            [2.0, -2.5, 1.0, 0.0, 0.0],
            [0.0, 2.0, -3.0, 1.5, 0.0],
            [0.0, 0.0, 2.0, -3.5, 2.0],
            [0.0, 0.0, 0.0, 2.0, -2.0],
        ]
    )
    np.testing.assert_allclose(g.rates, expected, atol=1e-15)
    assert g.displacements == (1, -1)
    assert g.jump_rate(0, 4) == 0.0
    assert g.jump_rate(1, 3) == 1.5


def test_generator_validation():
    """Test that invalid generators and transitions are rejected"""
    with pytest.raises(DomainError):
        ctmc.generator_from_transitions([ctmc.Transition(1, 1, lambda m: -1.0)], 3)
    with pytest.raises(DomainError):
        ctmc.Generator(np.zeros((2, 3)))
    with pytest.raises(DomainError):
        ctmc.Generator([[-1.0, 0.0], [0.5, 0.0]])
    with pytest.raises(DomainError):
        ctmc.Generator([[1.0, -1.0], [-1.0, 1.0]])


def test_distribution_validation():
    """Test that invalid distributions are rejected"""
    with pytest.raises(DomainError):
        ctmc.Distribution([0.5, 0.6])
    with pytest.raises(DomainError):
        ctmc.Distribution([1.2, -0.2])
    with pytest.raises(ShapeError):
        ctmc.Distribution([[0.5, 0.5]])
    point = ctmc.Distribution.point_mass(4, 2)
    assert point[2] == 1.0
    with pytest.raises(DomainError):
        ctmc.Distribution.point_mass(4, 5)


def test_forward_solve_pure_death():
    """Test uniformization against the closed-form pure-death law"""
    g = ctmc.Generator.pure_death(16)
    for o in (0, 3, 16):
        p0 = ctmc.Distribution.point_mass(16, o)
        assert ctmc.forward_solve(g, p0, 0.0).probs[o] == 1.0
        for t in (0.01, np.log(2.0), 1.0, 5.0, 15.0):
            got = ctmc.forward_solve(g, p0, t).probs
            assert np.abs(got - _pure_death_pmf(o, t, 16)).max() < 1e-9


def test_forward_solve_semigroup():
    """Test that solving over t1 + t2 equals solving over t1 then t2"""
    g = random_generator(8, seed=4)
    p0 = ctmc.Distribution(np.full(9, 1 / 9))
    direct = ctmc.forward_solve(g, p0, 1.3)
    composed = ctmc.forward_solve(g, ctmc.forward_solve(g, p0, 0.4), 0.9)
    assert np.abs(direct.probs - composed.probs).max() < 1e-9


def test_forward_solve_preserves_probability():
    """Test nonnegativity and total mass over a range of times"""
    g = random_generator(8, seed=5)
    p0 = ctmc.Distribution.point_mass(8, 3)
    for t in (0.0, 0.5, 2.0, 7.5, 20.0):
        probs = ctmc.forward_solve(g, p0, t).probs
        assert np.all(probs >= 0)
        assert abs(probs.sum() - 1.0) < 1e-12
    with pytest.raises(DomainError):
        ctmc.forward_solve(g, p0, -1.0)


def test_transition_matrix_columns():
    """Test that every column of the transition matrix is a distribution"""
    mat = ctmc.transition_matrix(birth_death(8), 1.7)
    np.testing.assert_allclose(mat.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(mat >= 0)


def test_simulate_exact():
    """Test event-driven simulation against exact laws"""
    rng = np.random.default_rng(6)
    frozen = ctmc.Generator(np.zeros((3, 3)))
    assert ctmc.simulate_exact(frozen, 2, 10.0, rng) == 2

    g = ctmc.Generator.pure_death(8)
    draws = ctmc.simulate_exact(g, 8, 0.7, rng, size=100000)
    assert tv(empirical(draws, 9), _pure_death_pmf(8, 0.7, 8)) < 0.01

    g = birth_death(8)
    draws = ctmc.simulate_exact(g, 4, 1.5, rng, size=100000)
    exact = ctmc.forward_solve(g, ctmc.Distribution.point_mass(8, 4), 1.5).probs
    assert tv(empirical(draws, 9), exact) < 0.02


def test_sample_distribution():
    """Test categorical sampling frequencies"""
    rng = np.random.default_rng(7)
    probs = np.array([0.5, 0.0, 0.25, 0.25])
    draws = ctmc.sample_distribution(probs, rng, 50000)
    assert not np.any(draws == 1)
    assert tv(empirical(draws, 4), probs) < 0.01


def test_reverse_rates_structure():
    """Test the reverse transitions of a birth-death chain"""
    g = birth_death(8, birth=1.0, death=1.0)
    p_s = ctmc.forward_solve(g, ctmc.Distribution.point_mass(8, 4), 0.8)
    probs = p_s.probs
    res = dict(ctmc.reverse_rates(g, p_s, 3))
    assert set(res) == {2, 4}
    assert res[2] == pytest.approx(1.0 * probs[2] / probs[3], rel=1e-12)
    assert res[4] == pytest.approx(4.0 * probs[4] / probs[3], rel=1e-12)

    mat = ctmc.reverse_rate_matrix(g, p_s)
    for m in range(9):
        for target, rate in ctmc.reverse_rates(g, p_s, m):
            assert mat[target, m] == pytest.approx(rate, rel=1e-12)


def test_reverse_rates_edge_cases():
    """Test states without forward in-edges and unreachable states"""
    g = ctmc.Generator.pure_death(4)
    p_s = ctmc.Distribution(_pure_death_pmf(4, 1.0, 4))
    assert ctmc.reverse_rates(g, p_s, 4) == []

    p_s = ctmc.Distribution(_pure_death_pmf(2, 1.0, 4))
    with pytest.raises(UnreachableStateError):
        ctmc.reverse_rates(g, p_s, 3)


def test_discrete_score_vanishes_at_detailed_balance():
    """Test that a symmetric walk has zero score under its uniform stationary
    law
    """
    g = ctmc.Generator.birth_death(6, 1.0, lambda m: 1.0)
    uniform = ctmc.Distribution(np.full(7, 1 / 7))
    for m in range(1, 7):
        assert ctmc.discrete_score(g, uniform, m, 0) == pytest.approx(0.0, abs=1e-12)
    for m in range(6):
        assert ctmc.discrete_score(g, uniform, m, 1) == pytest.approx(0.0, abs=1e-12)


def test_discrete_score_errors():
    """Test the domain checks of the discrete score"""
    g = birth_death(6)
    p_s = ctmc.Distribution(np.full(7, 1 / 7))
    with pytest.raises(DomainError):
        ctmc.discrete_score(g, p_s, 3, 2)
    with pytest.raises(DomainError):
        ctmc.discrete_score(g, p_s, 0, 0)


def test_kolmogorov_residuals():
    """Test the Kolmogorov equations on several generators"""
    assert ctmc.kolmogorov_residuals(ctmc.Generator(np.zeros((4, 4))), 1.0) == (0.0, 0.0)
    assert max(ctmc.kolmogorov_residuals(ctmc.Generator.pure_death(8), 1.0)) < 1e-6
    assert max(ctmc.kolmogorov_residuals(random_generator(8, seed=8), 0.5)) < 1e-6
    with pytest.raises(DomainError):
        ctmc.kolmogorov_residuals(ctmc.Generator.pure_death(3), 1e-4)


def test_simulate_reverse_errors():
    """Test the time checks of reverse simulation"""
    rng = np.random.default_rng(9)
    with pytest.raises(DomainError):
        ctmc.simulate_reverse(lambda u: np.zeros((3, 3)), [0, 1], 1.0, 2.0, rng)
    np.testing.assert_array_equal(
        ctmc.simulate_reverse(lambda u: np.zeros((3, 3)), [0, 1], 2.0, 1.0, rng), [0, 1]
    )


def test_transition_cache():
    """Test that transition matrices are computed once per index"""
    g = birth_death(4)
    cache = ctmc.TransitionCache(g, [0.0, 0.5, 1.0])
    first = cache(2)
    assert cache(2) is first
    np.testing.assert_allclose(first, ctmc.transition_matrix(g, 1.0))
    np.testing.assert_array_equal(cache(0), np.eye(5))
