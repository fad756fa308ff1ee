import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import two_point_mixture
from maskcfg.analysis import (
    REGION_NAMES,
    TVCurve,
    decay_exponent_fit,
    limit_distribution_2d,
    local_moments,
    private_set,
    region_decomposition_2d,
    restrict,
    sampled_distribution_1d_cases,
    tv,
    tv_curve_1d_closed,
    tv_curve_2d,
)
from maskcfg.closed_form import TimeRatio, sampled_distribution_2d, solve_1d_guided, solve_2d_guided
from maskcfg.corpus import full_support_mixture, log_ratio_gap, random_distribution, random_mixture, separated_mixture
from maskcfg.errors import DegenerateInput, DegenerateLimit, DimensionMismatch, EmptyRestriction, SpaceMismatch
from maskcfg.oracle import evolve_exact
from maskcfg.rates import guided_reverse
from maskcfg.scenarios import regions_example
from maskcfg.state import DenseDistribution, GuidanceConfig, MixtureModel, StateSpace, log_normalizer_Z, tilted_distribution

R_T1_T05 = 0.6224593312018546


def rand_dist(seed, space):
    return DenseDistribution(space, random_distribution(np.random.default_rng(seed), (space.total_states,)))


# -- tv -----------------------------------------------------------------------------


def test_tv_basic():
    sp = StateSpace(1, 3)
    a = DenseDistribution.point_mass(sp, (1,))
    b = DenseDistribution.point_mass(sp, (2,))
    assert tv(a, a) == 0.0
    assert tv(a, b) == 1.0
    with pytest.raises(SpaceMismatch):
        tv(a, DenseDistribution.point_mass(StateSpace(1, 4), (1,)))


def test_tv_brute_force():
    sp = StateSpace(2, 4)
    p, q = rand_dist(1, sp), rand_dist(2, sp)
    brute = 0.5 * sum(abs(p[x] - q[x]) for x in sp.states())
    assert tv(p, q) == pytest.approx(brute, abs=1e-14)


@given(st.integers(0, 10_000))
def test_tv_is_a_metric(seed):
    sp = StateSpace(2, 3)
    p, q, r = (rand_dist(seed + k, sp) for k in range(3))
    assert tv(p, q) == tv(q, p)
    assert 0 <= tv(p, q) <= 1
    assert tv(p, r) <= tv(p, q) + tv(q, r) + 1e-12


# -- TV curves -------------------------------------------------------------------------


def test_tv_curve_1d_w_zero_value():
    m = random_mixture(np.random.default_rng(0), 1, 5)
    g = GuidanceConfig(0, 0.0)
    c = tv_curve_1d_closed(m, g, 1.0, [0.5, 1.0])
    assert c.values[0] == pytest.approx(R_T1_T05, abs=1e-15)
    direct = tv(solve_1d_guided(m, g, 1.0, 0.5), tilted_distribution(m, g))
    assert c.values[0] == pytest.approx(direct, abs=1e-12)
    assert c.values[1] == 0.0 and np.isneginf(c.log_values[1])


@given(st.integers(0, 10_000), st.sampled_from([0.5, 2.0, 5.0, 40.0]))
def test_tv_curve_1d_matches_direct(seed, w):
    m = random_mixture(np.random.default_rng(seed), 1, 6)
    g = GuidanceConfig(0, w)
    times = np.linspace(0, 1, 11)
    c = tv_curve_1d_closed(m, g, 1.0, times)
    target = tilted_distribution(m, g)
    assert np.all(np.diff(c.values) <= 0)
    assert np.all((0 <= c.values) & (c.values <= 1))
    for t, v, lv in zip(times, c.values, c.log_values):
        direct = tv(solve_1d_guided(m, g, 1.0, t), target)
        if direct > 1e-250:
            assert abs(v - direct) <= 1e-10
        else:
            # underflowed: compare against the exponent Z ln r directly
            expect = np.exp(log_normalizer_Z(m, g)) * TimeRatio(1.0, t).log_r
            assert lv == pytest.approx(expect, rel=1e-10)
            assert lv < np.log(1e-250)


def test_tv_curve_1d_log_space_past_underflow():
    m = separated_mixture(np.random.default_rng(1), 1, 8)
    g = GuidanceConfig(0, 200.0)
    tr = TimeRatio(1.0, 0.5)
    c = tv_curve_1d_closed(m, g, 1.0, [0.5])
    expect = np.exp(log_normalizer_Z(m, g)) * tr.log_r
    assert c.values[0] == 0.0
    assert c.log_values[0] == pytest.approx(expect, rel=1e-10)


def test_tv_curve_2d_end_and_oracle():
    m = random_mixture(np.random.default_rng(3), 2, 4)
    g = GuidanceConfig(0, 1.0)
    times = [0.0, 0.3, 0.6, 0.9, 1.0]
    c = tv_curve_2d(m, g, 1.0, times)
    assert c.values[-1] == 0.0
    gen = guided_reverse(m, g)
    sol = evolve_exact(gen, 1.0, times, DenseDistribution.point_mass(m.space, (4, 4)))
    final = sol.densities[-1]
    for v, d in zip(c.values, sol.densities):
        assert v == pytest.approx(tv(d, final), abs=1e-8)


def test_tv_curve_2d_self_guidance_is_mask_mass():
    sp = StateSpace(2, 4)
    m = MixtureModel.from_data(sp, [1.0], [random_distribution(np.random.default_rng(4), sp.data_shape)])
    g = GuidanceConfig(0, 3.0)
    times = np.linspace(0, 0.95, 8)
    c = tv_curve_2d(m, g, 1.0, times)
    sol = evolve_exact(guided_reverse(m, g), 1.0, list(times) + [1.0], DenseDistribution.point_mass(sp, (4, 4)))
    for v, d in zip(c.values, sol.densities):
        assert v == pytest.approx(tv(d, sol.densities[-1]), abs=1e-10)
        assert v == pytest.approx(d.mask_mass(), abs=1e-10)


def test_tv_curve_dimension_checks():
    m1 = random_mixture(np.random.default_rng(0), 1, 4)
    m2 = random_mixture(np.random.default_rng(0), 2, 4)
    with pytest.raises(DimensionMismatch):
        tv_curve_2d(m1, GuidanceConfig(0, 1.0), 1.0, [0.5])
    with pytest.raises(DimensionMismatch):
        tv_curve_1d_closed(m2, GuidanceConfig(0, 1.0), 1.0, [0.5])


# -- decay fits -------------------------------------------------------------------------


def test_decay_fit_one_dim_slope_tracks_best_ratio():
    m = separated_mixture(np.random.default_rng(7), 1, 8, gap=0.1)
    ws = np.arange(40.0, 61.0, 5.0)
    curves = [tv_curve_1d_closed(m, GuidanceConfig(0, w), 1.0, [0.5]) for w in ws]
    fit = decay_exponent_fit(curves, ws, 0.5)
    top, _ = log_ratio_gap(m)
    assert abs(fit.slope - top) <= 0.1 * top
    # ln(-ln TV) = ln Z + ln ln(1/r), exactly
    lnln = np.log(-TimeRatio(1.0, 0.5).log_r)
    for w, c in zip(ws, curves):
        assert np.log(-c.log_values[0]) == pytest.approx(log_normalizer_Z(m, GuidanceConfig(0, w)) + lnln, abs=1e-10)


def test_decay_fit_self_guidance_is_flat():
    sp = StateSpace(1, 6)
    m = MixtureModel.from_data(sp, [1.0], [np.full(5, 0.2)])
    ws = [2.0, 4.0, 6.0, 8.0]
    fit = decay_exponent_fit([tv_curve_1d_closed(m, GuidanceConfig(0, w), 1.0, [0.5]) for w in ws], ws, 0.5)
    assert abs(fit.slope) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_decay_fit_two_dim_positive(seed):
    m = full_support_mixture(np.random.default_rng(100 + seed), 2, 4)
    ws = np.arange(2.0, 9.0)
    curves = [tv_curve_2d(m, GuidanceConfig(0, w), 1.0, [0.5]) for w in ws]
    fit = decay_exponent_fit(curves, ws, 0.5)
    assert fit.slope > 0
    assert fit.residual <= 0.3


def test_decay_fit_preconditions():
    m = random_mixture(np.random.default_rng(0), 1, 4)
    curves = [tv_curve_1d_closed(m, GuidanceConfig(0, w), 1.0, [0.0, 0.5]) for w in (2.0, 3.0)]
    with pytest.raises(ValueError):
        decay_exponent_fit(curves, [1.0, 3.0], 0.5)
    with pytest.raises(ValueError):
        decay_exponent_fit(curves, [3.0, 2.0], 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(DegenerateInput):
            decay_exponent_fit(curves, [2.0, 3.0], 0.0)
    with pytest.warns(UserWarning):
        with pytest.raises(DegenerateInput):
            decay_exponent_fit(curves, [2.0, 3.0], 0.0)


# -- 1D support cases -------------------------------------------------------------------


def test_one_dim_disjoint_returns_class():
    sp = StateSpace(1, 5)
    m = MixtureModel.from_data(sp, [0.3, 0.7], [[0.4, 0.6, 0, 0], [0, 0, 0.5, 0.5]])
    for w in (0.0, 1.0, 10.0):
        q = sampled_distribution_1d_cases(m, GuidanceConfig(0, w))
        np.testing.assert_allclose(q.probs, m.conditional(0).probs, atol=1e-15)


def test_one_dim_overlap_example():
    m = two_point_mixture()
    q = sampled_distribution_1d_cases(m, GuidanceConfig(0, 1.0))
    np.testing.assert_allclose(q.probs, [2 / 3, 1 / 3, 0, 0], atol=1e-15)
    q_or = evolve_exact(guided_reverse(m, GuidanceConfig(0, 1.0)), 1.0, [1.0], DenseDistribution.point_mass(m.space, (4,)))
    np.testing.assert_allclose(q_or.densities[0].probs, q.probs, atol=1e-12)


def test_one_dim_overlap_strong_limit():
    m = two_point_mixture()
    q = sampled_distribution_1d_cases(m, GuidanceConfig(0, 1e4))
    assert q[(2,)] == 0.0
    np.testing.assert_array_equal(q.probs, DenseDistribution.point_mass(m.space, (1,)).probs)
    np.testing.assert_array_equal(q.probs, restrict(m.conditional(0), private_set(m, 0)).probs)


@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.5, 1.0, 5.0, 20.0]))
def test_one_dim_cases_equal_tilt(seed, w):
    m = random_mixture(np.random.default_rng(seed), 1, 7, classes=3, density=0.5)
    g = GuidanceConfig(0, w)
    np.testing.assert_allclose(sampled_distribution_1d_cases(m, g).probs, tilted_distribution(m, g).probs, atol=1e-12)


@given(st.integers(0, 10_000), st.sampled_from([0.0, 1.0, 5.0]))
def test_private_restriction_preserved(seed, w):
    m = random_mixture(np.random.default_rng(seed), 1, 8, density=0.6)
    A = private_set(m, 0)
    if not A:
        return
    q = restrict(sampled_distribution_1d_cases(m, GuidanceConfig(0, w)), A)
    ref = restrict(m.conditional(0), A)
    np.testing.assert_allclose(q.probs, ref.probs, atol=1e-12)
    for a, b in zip(local_moments(q, A), local_moments(ref, A)):
        np.testing.assert_allclose(a, b, atol=1e-12)


# -- regions --------------------------------------------------------------------------


def test_five_token_regions_and_limit():
    m = regions_example()
    rd = region_decomposition_2d(m, "z1")
    assert rd.R1 == {(1, 1)}
    assert rd.R2_1 == {(2, 1), (3, 1)}
    assert rd.R2_2 == {(1, 2), (1, 3)}
    assert rd.R3 == set()
    assert rd.R4 == {(2, 2), (2, 3), (3, 2), (3, 3)}
    lim = limit_distribution_2d(rd, m)
    assert lim[(1, 1)] == pytest.approx(1 / 3, abs=1e-15)
    for x in [(2, 1), (3, 1), (1, 2), (1, 3)]:
        assert lim[x] == pytest.approx(1 / 6, abs=1e-15)
    for x in rd.R4:
        assert lim[x] == 0.0


def test_disjoint_marginals_all_private():
    sp = StateSpace(2, 5)
    a = np.zeros((4, 4))
    a[:2, :2] = [[0.1, 0.2], [0.3, 0.4]]
    b = np.zeros((4, 4))
    b[2:, 2:] = 0.25
    m = MixtureModel.from_data(sp, [0.5, 0.5], [a, b])
    rd = region_decomposition_2d(m, 0)
    assert rd.R1 == {(1, 1), (1, 2), (2, 1), (2, 2)}
    assert all(not rd.regions[n] for n in REGION_NAMES[1:])
    np.testing.assert_allclose(limit_distribution_2d(rd, m).probs, m.conditional(0).probs, atol=1e-15)
    np.testing.assert_allclose(sampled_distribution_2d(m, GuidanceConfig(0, 3.0)).probs, m.conditional(0).probs, atol=1e-12)


def brute_regions(m, k):
    def supp(j):
        return {tuple(int(v) + 1 for v in x) for x in np.argwhere(m.conditional(j).data_grid() > 1e-12)}

    X = supp(k)
    others = set().union(*(supp(j) for j in range(m.n_classes) if j != k))
    S = X & others
    shared = [{x[d] for x in X} & {x[d] for x in others} for d in (0, 1)]
    out = {n: set() for n in REGION_NAMES}
    for x in X:
        if x in S:
            out["R4"].add(x)
        elif x[0] in shared[0] and x[1] in shared[1]:
            out["R3"].add(x)
        elif x[0] in shared[0]:
            out["R2_1"].add(x)
        elif x[1] in shared[1]:
            out["R2_2"].add(x)
        else:
            out["R1"].add(x)
    return out


@given(st.integers(0, 10_000), st.integers(3, 6), st.sampled_from([0.2, 0.4, 0.7]))
def test_regions_brute_force(seed, n, density):
    m = random_mixture(np.random.default_rng(seed), 2, n, density=density)
    rd = region_decomposition_2d(m, 0)
    ref = brute_regions(m, 0)
    for name in REGION_NAMES:
        assert set(rd.regions[name]) == ref[name]
    union = set().union(*rd.regions.values())
    assert sum(len(v) for v in rd.regions.values()) == len(union)


@given(st.integers(0, 10_000))
def test_weight_ordering_pointwise(seed):
    m = random_mixture(np.random.default_rng(seed), 2, 5, density=0.5)
    rd = region_decomposition_2d(m, 0)
    for w in (0.0, 0.5, 1.0, 4.0, 16.0):
        for x in rd.ratios:
            a1, a21, a22, a3, a4 = rd.candidate_weights(x, w)
            assert a1 >= a21 - 1e-12 and a1 >= a22 - 1e-12
            assert min(a21, a22) >= a3 - 1e-12
            assert a3 >= a4 - 1e-12


@given(st.integers(0, 10_000))
def test_limit_support_and_large_w(seed):
    m = random_mixture(np.random.default_rng(seed), 2, 4, density=0.7)
    rd = region_decomposition_2d(m, 0)
    try:
        lim = limit_distribution_2d(rd, m)
    except DegenerateLimit:
        assert not (rd.R1 or rd.R2_1 or rd.R2_2)
        return
    supp = {m.space.state(i) for i in np.flatnonzero(lim.probs > 0)}
    assert supp <= set(rd.ratios) - set(rd.R4)
    far = sampled_distribution_2d(m, GuidanceConfig(0, 200.0))
    np.testing.assert_allclose(far.probs, lim.probs, atol=1e-6)


# -- local moments ---------------------------------------------------------------------


def test_local_moments_point_mass():
    sp = StateSpace(2, 4)
    d = DenseDistribution.point_mass(sp, (2, 3))
    mean, cov = local_moments(d, {(2, 3), (1, 1)})
    np.testing.assert_array_equal(mean, [2, 3])
    np.testing.assert_array_equal(cov, np.zeros((2, 2)))


def test_local_moments_two_point():
    sp = StateSpace(1, 4)
    d = DenseDistribution.from_data(sp, [0.5, 0.0, 0.5])
    mean, cov = local_moments(d, {(1,), (3,)})
    assert mean[0] == pytest.approx(2.0) and cov[0, 0] == pytest.approx(1.0)
    with pytest.raises(EmptyRestriction):
        local_moments(d, {(2,)})
