import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from maskcfg.corpus import random_distribution
from maskcfg.forward import ForwardKernel, forward_density, forward_density_at, forward_generator
from maskcfg.state import DenseDistribution, StateSpace


def random_mu(seed, dims, n, density=1.0):
    sp = StateSpace(dims, n)
    return DenseDistribution.from_data(sp, random_distribution(np.random.default_rng(seed), sp.data_shape, density))


def test_kernel_columns_are_stochastic():
    a = ForwardKernel(StateSpace(1, 5), 0.8).matrix()
    np.testing.assert_allclose(a.sum(axis=0), 1.0, atol=1e-15)
    assert a[0, 0] == pytest.approx(np.exp(-0.8))
    assert a[4, 0] == pytest.approx(1 - np.exp(-0.8))
    assert a[4, 4] == 1.0


def test_time_zero_is_identity():
    mu = random_mu(1, 2, 4)
    np.testing.assert_array_equal(forward_density(mu, 0.0).probs, mu.probs)


@pytest.mark.parametrize("t", [0.1, 1.0, 3.0])
def test_two_token_point_mass(t):
    mu = DenseDistribution.point_mass(StateSpace(1, 2), (1,))
    np.testing.assert_allclose(forward_density(mu, t).probs, [np.exp(-t), 1 - np.exp(-t)], atol=1e-15)


def test_matches_generator_exponential():
    mu = random_mu(7, 2, 4)
    gen = forward_generator(mu.space).toarray()
    ref = expm(0.7 * gen) @ mu.probs
    np.testing.assert_allclose(forward_density(mu, 0.7).probs, ref, atol=1e-8)


def test_all_mask_absorbs_at_large_time():
    mu = random_mu(2, 2, 3)
    assert forward_density_at(mu, (3, 3), 50.0) >= 1 - 1e-20


def test_unmasked_point_decays_like_exp_minus_dt():
    mu = random_mu(3, 2, 4)
    t = 0.4
    assert forward_density_at(mu, (2, 3), t) == pytest.approx(np.exp(-2 * t) * mu[(2, 3)], rel=1e-14)


def test_one_mask_uses_marginal():
    mu = random_mu(4, 2, 4)
    t = 1.0
    marginal = mu.data_grid()[1, :].sum()
    expect = np.exp(-t) * (1 - np.exp(-t)) * marginal
    assert forward_density_at(mu, (2, 4), t) == pytest.approx(expect, rel=1e-13)
    assert forward_density(mu, t)[(2, 4)] == pytest.approx(expect, rel=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(2, 4), st.floats(0.0, 5.0))
def test_scalar_form_matches_vector(seed, dims, n, t):
    mu = random_mu(seed, dims, n, 0.7)
    vec = forward_density(mu, t)
    for idx in range(mu.space.total_states):
        x = mu.space.state(idx)
        assert abs(forward_density_at(mu, x, t) - vec.probs[idx]) <= 1e-12


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_conservation_and_monotone_absorption(seed, dims):
    mu = random_mu(seed, dims, 3)
    last = -1.0
    for t in np.geomspace(1e-3, 50, 15):
        d = forward_density(mu, t)
        assert abs(d.probs.sum() - 1) <= 1e-12
        m = d.probs[mu.space.all_mask_index]
        assert m >= last - 1e-15
        last = m


@given(st.integers(0, 10_000), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_semigroup(seed, s, t):
    mu = random_mu(seed, 2, 4)
    two = forward_density(forward_density(mu, s), t)
    one = forward_density(mu, s + t)
    np.testing.assert_allclose(two.probs, one.probs, atol=1e-10)


@given(st.integers(0, 10_000), st.permutations([0, 1, 2]))
def test_dimension_order_invariance(seed, order):
    mu = random_mu(seed, 3, 3)
    np.testing.assert_allclose(forward_density(mu, 0.9, order).probs, forward_density(mu, 0.9).probs, atol=1e-15)
