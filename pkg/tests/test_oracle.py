import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from maskcfg.corpus import random_distribution, random_mixture
from maskcfg.errors import StepTooCoarse
from maskcfg.forward import forward_density
from maskcfg.oracle import absorb, evolve_exact, evolve_ode, expm_uniformized
from maskcfg.rates import ReverseGenerator, guided_reverse, unguided_reverse
from maskcfg.state import DenseDistribution, GuidanceConfig, StateSpace
from scipy.linalg import expm


def all_mask(space):
    return DenseDistribution.point_mass(space, (space.alphabet,) * space.dims)


def test_time_zero_is_identity():
    m = random_mixture(np.random.default_rng(0), 2, 4)
    q0 = all_mask(m.space)
    sol = evolve_exact(guided_reverse(m, GuidanceConfig(0, 1.0)), 1.0, [0.0], q0)
    np.testing.assert_array_equal(sol.densities[0].probs, q0.probs)


def test_zero_generator_keeps_state():
    space = StateSpace(1, 3)
    gen = ReverseGenerator(space, sp.csc_matrix((3, 3)), "unguided")
    q0 = DenseDistribution(space, [0.2, 0.3, 0.5])
    for sol in (evolve_exact(gen, 1.0, [0.3, 0.8], q0), evolve_ode(gen, 1.0, [0.3, 0.8], q0, 0.01)):
        for d in sol.densities:
            np.testing.assert_allclose(d.probs, q0.probs, atol=1e-15)


def test_uniformization_matches_dense_expm():
    m = random_mixture(np.random.default_rng(1), 2, 4, density=1.0)
    gen = guided_reverse(m, GuidanceConfig(0, 2.0))
    q0 = all_mask(m.space).probs
    vecs, tail = expm_uniformized(gen.base, [0.1, 1.0, 4.0], q0)
    assert tail <= 1e-13
    for s, v in zip([0.1, 1.0, 4.0], vecs):
        np.testing.assert_allclose(v, expm(s * gen.dense()) @ q0, atol=1e-12)


def test_absorption_equals_large_time():
    m = random_mixture(np.random.default_rng(2), 2, 4, density=0.7)
    gen = guided_reverse(m, GuidanceConfig(0, 1.0))
    q0 = all_mask(m.space).probs
    limit = absorb(gen, q0)
    vec, _ = expm_uniformized(gen.base, [60.0], q0)
    np.testing.assert_allclose(limit, vec[0], atol=1e-12)


def test_ode_agrees_with_exact_in_three_dims():
    m = random_mixture(np.random.default_rng(3), 3, 3, density=0.8)
    gen = guided_reverse(m, GuidanceConfig(0, 1.0))
    q0 = all_mask(m.space)
    times = [0.2, 0.5, 0.8, 0.95]
    a = evolve_exact(gen, 1.0, times, q0)
    b = evolve_ode(gen, 1.0, times, q0, 1e-3)
    for x, y in zip(a.densities, b.densities):
        np.testing.assert_allclose(x.probs, y.probs, atol=1e-7)


def test_rk4_convergence_order():
    m = random_mixture(np.random.default_rng(4), 1, 5)
    gen = guided_reverse(m, GuidanceConfig(0, 1.0))
    q0 = all_mask(m.space)
    # close to the horizon, where truncation error dominates roundoff at both steps
    times = [0.98]
    ref = evolve_exact(gen, 1.0, times, q0)
    errs = []
    for step in (1e-3, 5e-4):
        sol = evolve_ode(gen, 1.0, times, q0, step)
        errs.append(max(np.abs(x.probs - y.probs).max() for x, y in zip(sol.densities, ref.densities)))
    assert 8 <= errs[0] / errs[1] <= 32


def test_ode_step_too_coarse():
    m = random_mixture(np.random.default_rng(5), 1, 5)
    gen = guided_reverse(m, GuidanceConfig(0, 20.0))
    with pytest.raises(StepTooCoarse):
        evolve_ode(gen, 1.0, [0.9], all_mask(m.space), 0.09)


def test_ode_rejects_times_near_horizon():
    m = random_mixture(np.random.default_rng(5), 1, 4)
    gen = guided_reverse(m, GuidanceConfig(0, 1.0))
    with pytest.raises(ValueError):
        evolve_ode(gen, 1.0, [0.999], all_mask(m.space), 0.01)


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_reverse_of_forward(seed, dims):
    space = StateSpace(dims, 3)
    mu = DenseDistribution.from_data(space, random_distribution(np.random.default_rng(seed), space.data_shape, 0.8))
    T = 1.5
    q0 = forward_density(mu, T)
    times = [0.0, 0.4, 1.0, 1.4, T]
    sol = evolve_exact(unguided_reverse(mu), T, times, q0)
    for t, d in zip(times, sol.densities):
        np.testing.assert_allclose(d.probs, forward_density(mu, T - t).probs, atol=1e-8)


@given(st.integers(0, 10_000), st.sampled_from([0.0, 1.0, 3.0]))
def test_conservation_both_methods(seed, w):
    m = random_mixture(np.random.default_rng(seed), 2, 3)
    gen = guided_reverse(m, GuidanceConfig(0, w))
    q0 = all_mask(m.space)
    for sol in (evolve_exact(gen, 1.0, [0.3, 0.9, 1.0], q0), evolve_ode(gen, 1.0, [0.3, 0.9], q0, 2e-3)):
        assert sol.tolerance >= 0
        for d in sol.densities:
            assert abs(d.probs.sum() - 1) <= 1e-12 and d.probs.min() >= 0


def test_stiff_generator_uses_dense_path():
    from maskcfg.closed_form import solve_2d_guided
    from maskcfg.scenarios import diamonds_2d

    m = diamonds_2d(True)
    g = GuidanceConfig(0, 10.0)
    gen = guided_reverse(m, g)
    assert gen.exit_rates.max() > 1e6
    times = [0.25, 0.5, 0.9]
    sol = evolve_exact(gen, 1.0, times, all_mask(m.space))
    assert sol.method == "pade-dense"
    for t, d in zip(times, sol.densities):
        np.testing.assert_allclose(d.probs, solve_2d_guided(m, g, 1.0, t).probs, atol=1e-10)
