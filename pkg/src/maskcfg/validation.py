"""The acceptance suite: one check per criterion, shared by the CLI and pytest.

Each check returns a :class:`CheckResult` carrying the measured worst-case
quantity next to its tolerance, so failures are diagnosable from the table.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import scenarios
from .analysis import (
    decay_exponent_fit,
    limit_distribution_2d,
    local_moments,
    private_set,
    region_decomposition_2d,
    restrict,
    tv,
    tv_curve_1d_closed,
    tv_curve_2d,
)
from .closed_form import (
    TimeRatio,
    coefficients_2d,
    density_from_coefficients,
    log_sampled_weights_2d,
    log_tv_exponent_1d,
    perturbed,
    sampled_distribution_2d,
    solve_1d_guided,
    solve_1d_unguided,
)
from .corpus import (
    corpus_1d,
    corpus_2d,
    full_support_mixture,
    random_distribution,
    random_mixture,
    separated_mixture,
)
from .oracle import evolve_exact
from .rates import guided_reverse
from .samplers import chi_square_test, empirical_distribution, sample_exact_event, sample_tau_leaping
from .state import (
    DenseDistribution,
    GuidanceConfig,
    StateSpace,
    alpha_divergence,
    log_normalizer_Z,
    tilted_distribution,
)

T = 1.0
INTERIOR = tuple(T * k / 10 for k in range(1, 10))


@dataclass
class CheckResult:
    key: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: float | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.key:2d} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _all_mask(space: StateSpace) -> DenseDistribution:
    return DenseDistribution.point_mass(space, (space.alphabet,) * space.dims)


def check_1(quick: bool = False, fault: str | None = None) -> CheckResult:
    rng = np.random.default_rng(101)
    worst = 0.0
    for i in range(20):
        space = StateSpace(1, 3 + i % 8)
        p = DenseDistribution.from_data(space, random_distribution(rng, space.data_shape, 0.8))
        worst = max(worst, np.abs(solve_1d_unguided(p, T, T).probs - p.probs).max())
    return CheckResult(1, "no initialization error", worst <= 1e-12, f"max|q_T - p| = {worst:.2e} <= 1e-12", budget=1.0)


def check_2(quick: bool = False, fault: str | None = None) -> CheckResult:
    mixtures = corpus_1d(202, 2 if quick else 5)
    ws = (-1.0, 0.0, 0.5, 2.0, 10.0)
    term = orac = 0.0
    for m in mixtures:
        for w in ws:
            g = GuidanceConfig(0, w)
            term = max(term, np.abs(solve_1d_guided(m, g, T, T).probs - tilted_distribution(m, g).probs).max())
            sol = evolve_exact(guided_reverse(m, g), T, INTERIOR, _all_mask(m.space))
            for t, d in zip(INTERIOR, sol.densities):
                orac = max(orac, np.abs(solve_1d_guided(m, g, T, t).probs - d.probs).max())
    ok = term <= 1e-12 and orac <= 1e-8
    return CheckResult(2, "1D guided terminal law", ok,
                       f"terminal {term:.2e} <= 1e-12, vs oracle {orac:.2e} <= 1e-8", budget=5.0)


def _log_tv_direct_1d(m, g, t) -> float:
    """Log TV between the closed-form law at ``t`` and the tilt, from log densities."""
    tilt = tilted_distribution(m, g).probs
    expo = log_tv_exponent_1d(log_normalizer_Z(m, g), TimeRatio(T, t))
    with np.errstate(divide="ignore"):
        terms = np.concatenate([[expo], expo + np.log(tilt[tilt > 0])])
    return float(np.log(0.5) + logsumexp(terms))


def check_3(quick: bool = False, fault: str | None = None) -> CheckResult:
    mixtures = corpus_1d(303, 3 if quick else 10)
    ws = (0.5, 1.0, 2.0, 5.0, 10.0)
    worst = 0.0
    log_cases = 0
    for m in mixtures:
        for w in ws:
            g = GuidanceConfig(0, w)
            curve = tv_curve_1d_closed(m, g, T, INTERIOR)
            tilt = tilted_distribution(m, g)
            for t, v, lv in zip(INTERIOR, curve.values, curve.log_values):
                direct = tv(solve_1d_guided(m, g, T, t), tilt)
                if v > 1e-300:
                    worst = max(worst, abs(direct - v))
                else:
                    log_cases += 1
                    worst = max(worst, abs(_log_tv_direct_1d(m, g, t) - lv))
    return CheckResult(3, "exact 1D TV law", worst <= 1e-10,
                       f"max deviation {worst:.2e} <= 1e-10 ({log_cases} log-space cases)", budget=5.0)


def _closed_vs_oracle_2d(mixtures, ws, fault=None):
    worst = term = drift = 0.0
    for m in mixtures:
        for w in ws:
            g = GuidanceConfig(0, w)
            gen = guided_reverse(m, g)
            sol = evolve_exact(gen, T, INTERIOR + (T,), _all_mask(m.space))
            coef = coefficients_2d(m, g)
            if fault == "coefficient":
                coef = perturbed(coef, 1e-3)
            for t, d in zip(INTERIOR, sol.densities):
                grid = density_from_coefficients(coef, TimeRatio(T, t).s)
                worst = max(worst, np.abs(grid.reshape(-1) - d.probs).max())
            # terminal law straight from the (possibly corrupted) coefficients, before renormalizing
            log_tilt = coef.log_u - coef.log_Z
            raw = np.where(np.isfinite(log_tilt), np.exp(log_sampled_weights_2d(coef) + log_tilt), 0.0)
            ref = sol.densities[-1].data_grid()
            term = max(term, np.abs(raw - ref).max())
            drift = max(drift, abs(raw.sum() - 1.0))
            if fault is None:
                qT = sampled_distribution_2d(m, g)
                term = max(term, np.abs(qT.probs - sol.densities[-1].probs).max())
    return worst, term, drift


def check_4(quick: bool = False, fault: str | None = None) -> CheckResult:
    mixtures = corpus_2d(404, 3 if quick else 10)
    worst, _, _ = _closed_vs_oracle_2d(mixtures, (0.0, 0.5, 1.0, 3.0), fault)
    return CheckResult(4, "2D closed form vs oracle", worst <= 1e-8, f"max-abs {worst:.2e} <= 1e-8", budget=60.0)


def check_5(quick: bool = False, fault: str | None = None) -> CheckResult:
    mixtures = corpus_2d(404, 3 if quick else 10)
    _, term, drift = _closed_vs_oracle_2d(mixtures, (0.0, 0.5, 1.0, 3.0), fault)
    ok = term <= 1e-8 and drift <= 1e-10
    return CheckResult(5, "2D sampled distribution", ok,
                       f"vs oracle terminal {term:.2e} <= 1e-8, |sum-1| {drift:.2e} <= 1e-10")


def tilt_log_slope(m, w: float, k: int = 0) -> float:
    """``d log Z / dw``: the tilted mean of ``log(p(x|z)/p(x))``."""
    p, q = m.full().probs, m.conditional(k).probs
    keep = q > 0
    lr = np.log(q[keep]) - np.log(p[keep])
    lu = np.log(q[keep]) + w * lr
    return float(np.exp(lu - logsumexp(lu)) @ lr)


def check_6(quick: bool = False, fault: str | None = None) -> CheckResult:
    rng = np.random.default_rng(606)
    grid = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    n_mix = 6 if quick else 20
    min_z = np.inf
    mono = True
    div_err = slope_err = 0.0
    for i in range(n_mix):
        m = separated_mixture(rng, 1 if i % 2 else 2, 6 if i % 2 else 4)
        logs = [log_normalizer_Z(m, GuidanceConfig(0, w)) for w in grid]
        min_z = min(min_z, min(logs))
        mono &= bool(np.all(np.diff(logs) >= -1e-12))
        for w, lz in zip(grid[1:], logs[1:]):
            d = alpha_divergence(m.conditional(0), m.full(), 1 + w)
            div_err = max(div_err, abs(lz - w * d))
        p, q = m.full().probs, m.conditional(0).probs
        log_sup = float(np.max(np.log(q[q > 0]) - np.log(p[q > 0])))
        slope_err = max(slope_err, abs(tilt_log_slope(m, 50.0) - log_sup) / log_sup)
    ok = min_z >= -1e-12 and mono and div_err <= 1e-10 and slope_err <= 0.05
    return CheckResult(6, "normalizer properties", ok,
                       f"min log Z {min_z:.1e}, monotone {mono}, divergence err {div_err:.1e} <= 1e-10, "
                       f"slope rel err {slope_err:.3f} <= 0.05")


def check_7(quick: bool = False, fault: str | None = None) -> CheckResult:
    m = scenarios.regions_example()
    rd = region_decomposition_2d(m, "z1")
    expected = {
        "R1": {(1, 1)},
        "R2_1": {(2, 1), (3, 1)},
        "R2_2": {(1, 2), (1, 3)},
        "R3": set(),
        "R4": {(2, 2), (2, 3), (3, 2), (3, 3)},
    }
    regions_ok = all(set(rd.regions[k]) == v for k, v in expected.items())
    lim = limit_distribution_2d(rd, m)
    target = np.zeros((4, 4))
    target[0, 0] = 1 / 3
    for x in [(1, 2), (1, 3), (2, 1), (3, 1)]:
        target[x[0] - 1, x[1] - 1] = 1 / 6
    lim_err = float(np.abs(lim.data_grid() - target).max())
    rng = np.random.default_rng(707)
    order_ok = True
    for i in range(10 if quick else 50):
        mm = random_mixture(rng, 2, 4 + i % 3, 2 + i % 2, density=0.5)
        r = region_decomposition_2d(mm, 0)
        for w in (0.0, 0.5, 1.0, 4.0, 16.0):
            for x in r.ratios:
                a1, a21, a22, a3, a4 = r.candidate_weights(x, w)
                order_ok &= a1 >= max(a21, a22) - 1e-12
                order_ok &= min(a21, a22) >= a3 - 1e-12
                order_ok &= a3 >= a4 - 1e-12
    ok = regions_ok and lim_err <= 1e-12 and order_ok
    return CheckResult(7, "region structure", ok,
                       f"regions exact {regions_ok}, limit err {lim_err:.1e}, pointwise ordering {order_ok}")


def check_8(quick: bool = False, fault: str | None = None) -> CheckResult:
    t0 = 0.5 * T
    s0 = TimeRatio(T, t0).s
    err1 = 0.0
    for m in corpus_1d(808, 3 if quick else 5):
        for w in (2.0, 4.0, 8.0, 16.0, 32.0):
            g = GuidanceConfig(0, w)
            _, lv = tv_curve_1d_closed(m, g, T, [t0]).at(t0)
            err1 = max(err1, abs(np.log(-lv) - log_normalizer_Z(m, g) - np.log(s0)))
    rng = np.random.default_rng(818)
    ws = np.arange(2.0, 9.0)
    slopes, resid = [], 0.0
    for _ in range(2 if quick else 5):
        m = full_support_mixture(rng, 2, 4)
        curves = [tv_curve_2d(m, GuidanceConfig(0, w), T, [t0]) for w in ws]
        fit = decay_exponent_fit(curves, ws, t0)
        slopes.append(fit.slope)
        resid = max(resid, fit.residual)
    ok = err1 <= 1e-10 and min(slopes) > 0 and resid <= 0.3
    return CheckResult(8, "double-exponential decay", ok,
                       f"1D identity err {err1:.1e} <= 1e-10, 2D min slope {min(slopes):.3f} > 0, "
                       f"max residual {resid:.3f} <= 0.3")


def check_9(quick: bool = False, fault: str | None = None) -> CheckResult:
    mixtures = [scenarios.clusters_1d(True)]
    rng = np.random.default_rng(909)
    while len(mixtures) < (3 if quick else 8):
        m = random_mixture(rng, 1, 8, 2, density=0.6)
        priv = private_set(m, 0)
        if priv and len(priv) < int((m.conditional(0).probs > 0).sum()):
            mixtures.append(m)
    worst = mom = 0.0
    for m in mixtures:
        A = private_set(m, 0)
        base = restrict(m.conditional(0), A)
        mb, cb = local_moments(m.conditional(0), A)
        for w in (0.0, 1.0, 5.0):
            qT = solve_1d_guided(m, GuidanceConfig(0, w), T, T)
            worst = max(worst, np.abs(restrict(qT, A).probs - base.probs).max())
            mq, cq = local_moments(qT, A)
            mom = max(mom, np.abs(mq - mb).max(), np.abs(cq - cb).max())
    ok = worst <= 1e-12 and mom <= 1e-10
    return CheckResult(9, "local moment preservation", ok,
                       f"restriction err {worst:.1e} <= 1e-12, moment err {mom:.1e}")


def noise_floor(q: DenseDistribution, n: int) -> float:
    """Expected plug-in TV from multinomial noise alone, ``sum sqrt(q(1-q)/(2 pi n))``."""
    p = q.probs
    return float(np.sum(np.sqrt(p * (1 - p) / (2 * np.pi * n))))


def check_10(quick: bool = False, fault: str | None = None) -> CheckResult:
    n = 200_000
    pvals = []
    cases = [(m, 1.0) for m in corpus_1d(1010, 3)] + [(m, w) for m, w in zip(corpus_2d(1011, 3), (1.0, 3.0, 0.5))]
    for i, (m, w) in enumerate(cases):
        g = GuidanceConfig(0, w)
        q = solve_1d_guided(m, g, T, T) if m.space.dims == 1 else sampled_distribution_2d(m, g)
        b = sample_exact_event(guided_reverse(m, g), T, n, seed=1000 + i)
        pvals.append(chi_square_test(b, q)[1])
    chi_ok = min(pvals) > 1e-3
    detail = f"chi-square min p {min(pvals):.3g} > 1e-3"
    tau_ok = True
    if not quick:
        m = full_support_mixture(np.random.default_rng(1012), 2, 5)
        g = GuidanceConfig(0, 5.0)
        q = sampled_distribution_2d(m, g)
        gen = guided_reverse(m, g)
        nt = 100_000
        tvs = [tv(empirical_distribution(sample_tau_leaping(gen, T, st, nt, seed=77)), q) for st in (25, 50, 200, 800)]
        band = 2 * noise_floor(q, nt)
        tau_ok = all(b <= a + band for a, b in zip(tvs, tvs[1:])) and tvs[-1] < tvs[0]
        detail += f"; tau TV {', '.join(f'{v:.4f}' for v in tvs)} (band {band:.4f})"
    return CheckResult(10, "sampler correctness", chi_ok and tau_ok, detail, budget=120.0)


def _overlap_mass(m, q: DenseDistribution) -> float:
    own = m.conditional(0).probs > 0
    other = np.zeros_like(own)
    for k in range(1, m.n_classes):
        other |= m.conditional(k).probs > 0
    return float(q.probs[own & other].sum())


def _terminal(m, w: float) -> DenseDistribution:
    g = GuidanceConfig(0, w)
    return solve_1d_guided(m, g, T, T) if m.space.dims == 1 else sampled_distribution_2d(m, g)


def check_11(quick: bool = False, fault: str | None = None) -> CheckResult:
    ws = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
    change = 0.0
    for m in (scenarios.clusters_1d(False), scenarios.diamonds_2d(False)):
        ref = _terminal(m, 0.0)
        for w in ws:
            change = max(change, np.abs(_terminal(m, w).probs - ref.probs).max())
    strict = True
    final = 0.0
    for m in (scenarios.clusters_1d(True), scenarios.diamonds_2d(True)):
        masses = [_overlap_mass(m, _terminal(m, w)) for w in ws]
        strict &= bool(np.all(np.diff(masses) < 0))
        final = max(final, masses[-1])
    ok = change <= 1e-10 and strict and final <= 1e-6
    return CheckResult(11, "figure-class behaviour", ok,
                       f"disjoint change {change:.1e} <= 1e-10, overlap strictly decreasing {strict}, "
                       f"overlap at w=100 {final:.1e} <= 1e-6")


CHECKS: dict[int, Callable[..., CheckResult]] = {
    1: check_1, 2: check_2, 3: check_3, 4: check_4, 5: check_5, 6: check_6,
    7: check_7, 8: check_8, 9: check_9, 10: check_10, 11: check_11,
}


def run_check(key: int, quick: bool = False, fault: str | None = None) -> CheckResult:
    start = time.perf_counter()
    try:
        res = CHECKS[key](quick=quick, fault=fault)
    except Exception as exc:  # a crash is a failure, reported not raised
        res = CheckResult(key, CHECKS[key].__name__, False, f"raised {type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - start
    res.passed = bool(res.passed)
    if res.budget is not None and not quick and res.seconds > res.budget:
        res.passed = False
        res.detail += f"; over time budget {res.budget:.0f}s"
    return res


def run_all(quick: bool = False, fault: str | None = None) -> list[CheckResult]:
    return [run_check(k, quick, fault) for k in CHECKS]
