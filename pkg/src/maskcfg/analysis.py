"""Total-variation decay, terminal-law case analysis, regions and local moments."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .closed_form import (
    TimeRatio,
    coefficients_2d,
    log_deviation_2d,
    log_tv_exponent_1d,
    sampled_distribution_2d,
)
from .errors import (
    DegenerateInput,
    DegenerateLimit,
    DimensionMismatch,
    EmptyClassSupport,
    EmptyRestriction,
    SpaceMismatch,
)
from .state import (
    DEFAULT_TAU,
    DenseDistribution,
    GuidanceConfig,
    MixtureModel,
    log_normalizer_Z,
    tilted_distribution,
)

logger = logging.getLogger(__name__)

UNDERFLOW_GUARD = 1e-300
RATIO_ONE_TOL = 1e-12


def tv(p: DenseDistribution, q: DenseDistribution) -> float:
    if p.space != q.space:
        raise SpaceMismatch(f"{p.space} vs {q.space}")
    return float(min(1.0, 0.5 * np.abs(p.probs - q.probs).sum()))


@dataclass(frozen=True, eq=False)
class TVCurve:
    times: np.ndarray
    values: np.ndarray
    log_values: np.ndarray
    w: float
    T: float

    def at(self, t: float) -> tuple[float, float]:
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.values[k]), float(self.log_values[k])

    def rows(self) -> Iterable[tuple[float, float, float, float]]:
        for t, v, lv in zip(self.times, self.values, self.log_values):
            yield self.w, float(t), float(v), float(lv)


def _curve(times, log_values, w, T) -> TVCurve:
    log_values = np.minimum(np.asarray(log_values, dtype=float), 0.0)
    return TVCurve(np.asarray(times, float), np.exp(log_values), log_values, float(w), float(T))


def tv_curve_1d_closed(m: MixtureModel, g: GuidanceConfig, T: float, times: Sequence[float]) -> TVCurve:
    if m.space.dims != 1:
        raise DimensionMismatch(f"expected D=1, got D={m.space.dims}")
    log_Z = log_normalizer_Z(m, g)
    logs = [log_tv_exponent_1d(log_Z, TimeRatio(T, float(t))) for t in times]
    return _curve(times, logs, g.w, T)


def tv_curve_2d(m: MixtureModel, g: GuidanceConfig, T: float, times: Sequence[float]) -> TVCurve:
    """Exact TV between the D = 2 law at each time and the terminal law, in log form."""
    if m.space.dims != 2:
        raise DimensionMismatch(f"expected D=2, got D={m.space.dims}")
    coef = coefficients_2d(m, g)
    logs = []
    for t in times:
        dev = log_deviation_2d(coef, TimeRatio(T, float(t)).s)
        logs.append(np.log(0.5) + logsumexp(dev) if np.isfinite(dev).any() else -np.inf)
    return _curve(times, logs, g.w, T)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    residual: float
    used_ws: tuple


def decay_exponent_fit(curves: Sequence[TVCurve], ws: Sequence[float], t0: float) -> DecayFit:
    """OLS of ``ln(-ln TV(t0))`` against ``w``; points with TV at 0 or 1 are dropped."""
    ws = np.asarray(ws, dtype=float)
    if len(curves) != ws.size:
        raise ValueError("one curve per w required")
    if np.any(np.diff(ws) <= 0):
        raise ValueError("ws must be increasing")
    if np.any(ws < 2):
        raise ValueError("decay fits need w >= 2")
    if len({c.T for c in curves}) > 1:
        raise ValueError("curves must share the horizon")
    xs, ys = [], []
    for w, c in zip(ws, curves):
        _, lv = c.at(t0)
        if not np.isfinite(lv) or lv >= 0:
            warnings.warn(f"TV at w={w} is degenerate ({np.exp(lv)}); excluded from fit")
            continue
        xs.append(w)
        ys.append(np.log(-lv))
    if len(xs) < 2:
        raise DegenerateInput("fewer than two usable points")
    xs, ys = np.array(xs), np.array(ys)
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = float(np.max(np.abs(ys - (slope * xs + intercept))))
    return DecayFit(float(slope), float(intercept), resid, tuple(xs.tolist()))


# -- support structure -------------------------------------------------------------


def _class_supports(m: MixtureModel, k: int, tau: float):
    return m.conditional(k).data_grid() > tau


def sampled_distribution_1d_cases(
    m: MixtureModel, g: GuidanceConfig, tau: float = DEFAULT_TAU
) -> DenseDistribution:
    """Terminal D = 1 law written piecewise by support overlap.

    Disjoint from every other class: the class conditional itself. Otherwise
    overlap states are damped by ``(a_k q(x) / sum_{overlapping} a_j p_j(x))^w``.
    """
    if m.space.dims != 1:
        raise DimensionMismatch(f"expected D=1, got D={m.space.dims}")
    k, w = g.class_index, g.w
    q = m.conditional(k).data_grid()
    own = q > tau
    others = np.zeros_like(own)
    for j in range(m.n_classes):
        if j != k:
            others |= _class_supports(m, j, tau)
    overlap = own & others
    if not overlap.any() or w == 0:
        return DenseDistribution.from_data(m.space, np.where(own, q, 0.0) / q[own].sum())
    full = sum(a * m.conditional(j).data_grid() for j, a in enumerate(m.weights))
    log_w = np.zeros(q.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.log(m.weights[k] * q) - np.log(full)
    log_w[overlap] = w * log_ratio[overlap]
    with np.errstate(divide="ignore"):
        lq = np.where(own, np.log(np.where(own, q, 1.0)) + log_w, -np.inf)
    probs = np.exp(lq - logsumexp(lq))
    probs[probs < UNDERFLOW_GUARD] = 0.0
    return DenseDistribution.from_data(m.space, probs / probs.sum())


REGION_NAMES = ("R1", "R2_1", "R2_2", "R3", "R4")


@dataclass(frozen=True, eq=False)
class RegionDecomposition:
    """Partition of the guided class's support by how private each state and its marginals are.

    ``ratios`` holds, per member state, ``(rho_1, rho_2, rho)``: the guided
    class's share of the first marginal, of the second marginal, and of the
    joint density. Weights at strength ``w`` follow from these.
    """

    guided_class: int
    regions: dict
    ratios: dict
    marginal_support: tuple
    marginal_shared: tuple
    limit_weights: dict = field(default_factory=dict)

    @property
    def R1(self):
        return self.regions["R1"]

    @property
    def R2_1(self):
        return self.regions["R2_1"]

    @property
    def R2_2(self):
        return self.regions["R2_2"]

    @property
    def R3(self):
        return self.regions["R3"]

    @property
    def R4(self):
        return self.regions["R4"]

    def region_of(self, x) -> str:
        for name in REGION_NAMES:
            if tuple(x) in self.regions[name]:
                return name
        raise KeyError(x)

    def candidate_weights(self, x, w: float) -> tuple[float, float, float, float, float]:
        """All five region formulas evaluated at one member state."""
        r1, r2, r = self.ratios[tuple(x)]
        p1, p2, p = r1**w, r2**w, r**w
        return 2.0, 1.0 + p1, 1.0 + p2, p1 + p2, (p1 + p2) * p

    def weight(self, x, w: float) -> float:
        vals = self.candidate_weights(x, w)
        return vals[REGION_NAMES.index(self.region_of(x))]

    def weights(self, w: float) -> dict:
        return {x: self.weight(x, w) for name in REGION_NAMES for x in self.regions[name]}

    def to_dict(self) -> dict:
        return {
            "guided_class": self.guided_class,
            "regions": {k: sorted(list(map(list, v))) for k, v in self.regions.items()},
            "limit_weights": [
                {"x": list(x), "region": self.region_of(x), "weight": wt}
                for x, wt in sorted(self.limit_weights.items())
            ],
        }


def region_decomposition_2d(
    m: MixtureModel, guided_class, tau: float = DEFAULT_TAU
) -> RegionDecomposition:
    if m.space.dims != 2:
        raise DimensionMismatch(f"expected D=2, got D={m.space.dims}")
    k = guided_class if isinstance(guided_class, (int, np.integer)) else m.class_of(guided_class)
    k = int(k)
    own = _class_supports(m, k, tau)
    if not own.any():
        raise EmptyClassSupport(f"class {m.labels[k]} has no support above {tau}")
    others = np.zeros_like(own)
    for j in range(m.n_classes):
        if j != k:
            others |= _class_supports(m, j, tau)
    shared = own & others
    own_m = (own.any(axis=1), own.any(axis=0))
    other_m = (others.any(axis=1), others.any(axis=0))
    shared_m = (own_m[0] & other_m[0], own_m[1] & other_m[1])

    q = m.conditional(k).data_grid()
    full = sum(a * m.conditional(j).data_grid() for j, a in enumerate(m.weights))
    a = m.weights[k]
    ratio = a * q / np.where(full > 0, full, 1.0)
    ratio1 = a * q.sum(axis=1) / np.where(full.sum(axis=1) > 0, full.sum(axis=1), 1.0)
    ratio2 = a * q.sum(axis=0) / np.where(full.sum(axis=0) > 0, full.sum(axis=0), 1.0)

    regions = {name: set() for name in REGION_NAMES}
    ratios = {}
    for i, j in zip(*np.nonzero(own)):
        x = (int(i) + 1, int(j) + 1)
        s1, s2 = bool(shared_m[0][i]), bool(shared_m[1][j])
        if shared[i, j]:
            name = "R4"
        elif s1 and s2:
            name = "R3"
        elif s1:
            name = "R2_1"
        elif s2:
            name = "R2_2"
        else:
            name = "R1"
        regions[name].add(x)
        ratios[x] = (float(min(ratio1[i], 1.0)), float(min(ratio2[j], 1.0)), float(min(ratio[i, j], 1.0)))
    rd = RegionDecomposition(
        guided_class=k,
        regions={n: frozenset(v) for n, v in regions.items()},
        ratios=ratios,
        marginal_support=(frozenset(np.flatnonzero(own_m[0]) + 1), frozenset(np.flatnonzero(own_m[1]) + 1)),
        marginal_shared=(frozenset(np.flatnonzero(shared_m[0]) + 1), frozenset(np.flatnonzero(shared_m[1]) + 1)),
    )
    limits = {}
    for x, (r1, r2, r) in ratios.items():
        one1 = float(abs(r1 - 1.0) <= RATIO_ONE_TOL)
        one2 = float(abs(r2 - 1.0) <= RATIO_ONE_TOL)
        name = rd.region_of(x)
        limits[x] = {
            "R1": 2.0,
            "R2_1": 1.0 + one1,
            "R2_2": 1.0 + one2,
            "R3": one1 + one2,
            "R4": 0.0,
        }[name]
    object.__setattr__(rd, "limit_weights", limits)
    return rd


def limit_distribution_2d(rd: RegionDecomposition, m: MixtureModel) -> DenseDistribution:
    """Strong-guidance limit: limit weights times the class conditional, normalized."""
    q = m.conditional(rd.guided_class).data_grid()
    data = np.zeros(q.shape)
    for (i, j), wt in rd.limit_weights.items():
        data[i - 1, j - 1] = wt * q[i - 1, j - 1]
    total = data.sum()
    if not total > 0:
        raise DegenerateLimit("every limiting weight vanishes")
    return DenseDistribution.from_data(m.space, data / total)


def private_set(m: MixtureModel, k: int, tau: float = DEFAULT_TAU) -> frozenset:
    """States supported by class ``k`` and by no other class."""
    own = _class_supports(m, k, tau)
    others = np.zeros_like(own)
    for j in range(m.n_classes):
        if j != k:
            others |= _class_supports(m, j, tau)
    idx = np.argwhere(own & ~others) + 1
    return frozenset(tuple(int(v) for v in row) for row in idx)


def restrict(d: DenseDistribution, A) -> DenseDistribution:
    """``d`` conditioned on the state set ``A``."""
    keep = np.zeros(d.space.total_states, dtype=bool)
    for x in A:
        keep[d.space.index(x)] = True
    mass = d.probs[keep].sum()
    if not mass > 0:
        raise EmptyRestriction("restriction set carries no mass")
    return DenseDistribution(d.space, np.where(keep, d.probs, 0.0) / mass)


def local_moments(d: DenseDistribution, A) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance of ``d`` restricted to ``A`` (states as integer vectors)."""
    r = restrict(d, A)
    pts = d.space.coords.astype(float)
    mean = r.probs @ pts
    centered = pts - mean
    cov = (centered * r.probs[:, None]).T @ centered
    return mean, cov
