"""Exact solutions of the reverse sampling dynamics for D = 1 and D = 2.

All time dependence enters through the ratio
``r(t) = (1 - e^{-(T-t)}) / (1 - e^{-T})``; we carry ``s = -ln r`` so that
powers ``r^a = e^{-a s}`` never overflow and underflow cleanly to zero.

The D = 2 densities are written with divided differences of ``e^{-ys}`` and
``(1 - e^{-ys})/y``, which are algebraically the four-case eigen-expansion
coefficients but stay finite when an exit rate collides with ``-lambda_NN``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, NormalizationDrift
from .state import (
    DenseDistribution,
    GuidanceConfig,
    MixtureModel,
    log_normalizer_Z,
    log_tilt_mass,
    tilted_distribution,
)

logger = logging.getLogger(__name__)

COLLISION_TOL = 1e-9
EXP_FLOOR = -745.0


@dataclass(frozen=True)
class TimeRatio:
    T: float
    t: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if not 0 <= self.t <= self.T:
            raise ValueError(f"time {self.t} outside [0, {self.T}]")

    @property
    def r(self) -> float:
        return float(np.expm1(-(self.T - self.t)) / np.expm1(-self.T))

    @property
    def log_r(self) -> float:
        if self.t == self.T:
            return -np.inf
        return float(np.log(-np.expm1(-(self.T - self.t))) - np.log(-np.expm1(-self.T)))

    @property
    def s(self) -> float:
        """Transformed time ``ln(1/r)``; zero at t = 0, infinite at t = T."""
        return -self.log_r


def pow_r(log_r: float, a) -> np.ndarray:
    """``r^a`` as ``exp(a ln r)``, exactly zero once the exponent drops below -745."""
    a = np.asarray(a, dtype=float)
    with np.errstate(invalid="ignore"):
        expo = np.where(a == 0, 0.0, a * log_r)
    out = np.where(expo < EXP_FLOOR, 0.0, np.exp(np.maximum(expo, EXP_FLOOR)))
    return out if out.ndim else float(out)


def _require_dims(m: MixtureModel, dims: int):
    if m.space.dims != dims:
        raise DimensionMismatch(f"expected D={dims}, got D={m.space.dims}")


# -- D = 1 ----------------------------------------------------------------------


def solve_1d_unguided(p: DenseDistribution, T: float, t: float) -> DenseDistribution:
    if p.space.dims != 1:
        raise DimensionMismatch(f"expected D=1, got D={p.space.dims}")
    tr = TimeRatio(T, t)
    r = tr.r
    probs = (1.0 - r) * p.probs
    probs[-1] = r
    return DenseDistribution(p.space, probs)


def log_tv_exponent_1d(log_Z: float, tr: TimeRatio) -> float:
    """``Z ln r`` evaluated without forming ``Z``."""
    s = tr.s
    if s == 0:
        return 0.0
    if np.isinf(s):
        return -np.inf
    return -float(np.exp(log_Z + np.log(s)))


def solve_1d_guided(m: MixtureModel, g: GuidanceConfig, T: float, t: float) -> DenseDistribution:
    _require_dims(m, 1)
    tr = TimeRatio(T, t)
    log_Z = log_normalizer_Z(m, g)
    expo = log_tv_exponent_1d(log_Z, tr)
    mask_mass = 0.0 if expo < EXP_FLOOR else float(np.exp(expo))
    filled = -float(np.expm1(expo))
    tilt = tilted_distribution(m, g).probs
    probs = filled * tilt
    probs[-1] = mask_mass
    return DenseDistribution(m.space, probs)


# -- D = 2 coefficients ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Coefficients2D:
    """Exit-rate coefficients of the guided D = 2 generator, kept in log form.

    ``log_c[i]`` for ``i < N-1`` is the row coefficient of token ``i+1``;
    ``log_c[N-1]`` is ``c_N``. Rows outside the conditional's marginal
    support are undefined (``c_defined`` false, value NaN) and never used.
    """

    log_c: np.ndarray
    log_d: np.ndarray
    log_Z: float
    log_L: float
    c_defined: np.ndarray
    d_defined: np.ndarray
    log_u: np.ndarray
    log_u1: np.ndarray
    log_u2: np.ndarray

    @property
    def c(self) -> np.ndarray:
        return np.exp(self.log_c)

    @property
    def d(self) -> np.ndarray:
        return np.exp(self.log_d)

    @property
    def Z(self) -> float:
        return float(np.exp(self.log_Z))

    @property
    def L(self) -> float:
        """``-lambda_NN``, the exit rate of the all-mask state."""
        return float(np.exp(self.log_L))

    @property
    def lambda_NN(self) -> float:
        return -self.L

    def collisions(self, tol: float = COLLISION_TOL) -> list[tuple[str, int]]:
        """Row/column coefficients within ``tol`` of ``-lambda_NN``."""
        hits = []
        L = self.L
        for name, vals, ok in (("c", self.c[:-1], self.c_defined), ("d", self.d[:-1], self.d_defined)):
            for i in np.flatnonzero(ok & (np.abs(vals - L) < tol)):
                hits.append((name, int(i) + 1))
        return hits


def coefficients_2d(m: MixtureModel, g: GuidanceConfig) -> Coefficients2D:
    _require_dims(m, 2)
    p = m.full().data_grid()
    q = m.conditional(g.class_index).data_grid()
    lu = log_tilt_mass(p, q, g.w)
    lu1 = log_tilt_mass(p.sum(axis=1), q.sum(axis=1), g.w)
    lu2 = log_tilt_mass(p.sum(axis=0), q.sum(axis=0), g.w)
    log_Z = float(logsumexp(lu))
    row = logsumexp(lu, axis=1)
    col = logsumexp(lu, axis=0)
    c_ok = np.isfinite(lu1)
    d_ok = np.isfinite(lu2)
    log_c = np.full(lu1.size + 1, np.nan)
    log_d = np.full(lu2.size + 1, np.nan)
    log_c[:-1][c_ok] = row[c_ok] - lu1[c_ok]
    log_d[:-1][d_ok] = col[d_ok] - lu2[d_ok]
    s1, s2 = logsumexp(lu1), logsumexp(lu2)
    log_c[-1] = log_Z - s1
    log_d[-1] = log_Z - s2
    return Coefficients2D(
        log_c=log_c,
        log_d=log_d,
        log_Z=log_Z,
        log_L=float(np.logaddexp(s1, s2)),
        c_defined=c_ok,
        d_defined=d_ok,
        log_u=lu,
        log_u1=lu1,
        log_u2=lu2,
    )


# -- divided differences in transformed time s ---------------------------------------


def _phi(a, b, s):
    """``(e^{-as} - e^{-bs}) / (b - a)``, symmetric, limit ``s e^{-as}`` when a = b."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    if np.isinf(s):
        return np.zeros(a.shape)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    gap = hi - lo
    close = gap < COLLISION_TOL
    safe_gap = np.where(close, 1.0, gap)
    far = np.exp(-lo * s) * (-np.expm1(-gap * s)) / safe_gap
    return np.where(close, s * np.exp(-lo * s), far)


def _g(y, s):
    """``(1 - e^{-ys}) / y``."""
    if np.isinf(s):
        return 1.0 / y
    return -np.expm1(-y * s) / y


def _psi(a, b, s):
    """``(g(a) - g(b)) / (b - a)`` for ``g(y) = (1 - e^{-ys})/y``; limit ``-g'(a)``."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    gap = b - a
    close = np.abs(gap) < COLLISION_TOL
    safe_gap = np.where(close, 1.0, gap)
    far = (_g(a, s) - _g(b, s)) / safe_gap
    if np.isinf(s):
        near = 1.0 / a**2
    else:
        near = (-np.expm1(-a * s) - a * s * np.exp(-a * s)) / a**2
    return np.where(close, near, far)


def _alpha_grid(coef: Coefficients2D, s: float) -> np.ndarray:
    """All ``alpha_t(x)`` on the ``N x N`` grid at transformed time ``s``."""
    n = coef.log_c.size
    L = coef.L
    c = np.where(coef.c_defined, coef.c[:-1], 1.0)
    d = np.where(coef.d_defined, coef.d[:-1], 1.0)
    alpha = np.empty((n, n))
    alpha[:-1, :-1] = _psi(c[:, None], L, s) + _psi(d[None, :], L, s)
    alpha[:-1, -1] = _phi(c, L, s) / c
    alpha[-1, :-1] = _phi(d, L, s) / d
    alpha[-1, -1] = 0.0 if np.isinf(s) else float(np.exp(-L * s))
    return alpha


def alpha_coefficient(coef: Coefficients2D, x: Sequence[int], tr: TimeRatio) -> float:
    """Coefficient ``alpha_t(x)`` for one state, all four mask cases."""
    n = coef.log_c.size
    x1, x2 = (int(v) for v in x)
    if not (1 <= x1 <= n and 1 <= x2 <= n):
        raise ValueError(f"{x} is not a state of a D=2, N={n} space")
    hits = coef.collisions()
    if hits:
        logger.debug("eigenvalue collision, analytic limit used for %s", hits)
    return float(_alpha_grid(coef, tr.s)[x1 - 1, x2 - 1])


def _density_grid(coef: Coefficients2D, s: float) -> np.ndarray:
    n = coef.log_c.size
    alpha = _alpha_grid(coef, s)
    grid = np.zeros((n, n))
    with np.errstate(under="ignore"):
        grid[:-1, :-1] = np.where(np.isfinite(coef.log_u), alpha[:-1, :-1] * np.exp(coef.log_u), 0.0)
        row_mass = np.exp(logsumexp(coef.log_u, axis=1))
        col_mass = np.exp(logsumexp(coef.log_u, axis=0))
    grid[:-1, -1] = np.where(coef.c_defined, alpha[:-1, -1] * row_mass, 0.0)
    grid[-1, :-1] = np.where(coef.d_defined, alpha[-1, :-1] * col_mass, 0.0)
    grid[-1, -1] = alpha[-1, -1]
    return grid


def solve_2d_guided(m: MixtureModel, g: GuidanceConfig, T: float, t: float) -> DenseDistribution:
    _require_dims(m, 2)
    tr = TimeRatio(T, t)
    coef = coefficients_2d(m, g)
    return DenseDistribution.from_grid(m.space, _density_grid(coef, tr.s))


def solve_2d_guided_many(
    m: MixtureModel, g: GuidanceConfig, T: float, times: Sequence[float]
) -> list[DenseDistribution]:
    """Same as :func:`solve_2d_guided` over a grid, sharing the coefficients."""
    _require_dims(m, 2)
    coef = coefficients_2d(m, g)
    return [
        DenseDistribution.from_grid(m.space, _density_grid(coef, TimeRatio(T, t).s)) for t in times
    ]


def log_sampled_weights_2d(coef: Coefficients2D) -> np.ndarray:
    """``log((1/c_i + 1/d_j) / (1/c_N + 1/d_N))`` over non-mask states."""
    lc = np.where(coef.c_defined, coef.log_c[:-1], 0.0)
    ld = np.where(coef.d_defined, coef.log_d[:-1], 0.0)
    num = np.logaddexp(-lc[:, None], -ld[None, :])
    den = np.logaddexp(-coef.log_c[-1], -coef.log_d[-1])
    return num - den


def sampled_distribution_2d(m: MixtureModel, g: GuidanceConfig) -> DenseDistribution:
    """Terminal law of the guided D = 2 dynamics: a reweighted tilted distribution."""
    _require_dims(m, 2)
    coef = coefficients_2d(m, g)
    log_tilt = coef.log_u - coef.log_Z
    logq = log_sampled_weights_2d(coef) + log_tilt
    data = np.where(np.isfinite(log_tilt), np.exp(logq), 0.0)
    total = data.sum()
    if abs(total - 1.0) > 1e-8:
        raise NormalizationDrift(f"sampled distribution sums to {total!r}")
    data = data / total
    return DenseDistribution.from_data(m.space, data)


def log_deviation_2d(coef: Coefficients2D, s: float) -> np.ndarray:
    """``log |q_t(x) - q_T(x)|`` on the ``N x N`` grid, finite far below float range.

    Unmasked states use divided differences of ``h(y) = e^{-ys}/y``; states with
    one mask use those of ``e^{-ys}``; the all-mask state is ``-L s``.
    """
    n = coef.log_c.size
    out = np.full((n, n), -np.inf)
    if np.isinf(s):
        return out
    L, log_L = coef.L, coef.log_L

    def log_phi(a, log_a):
        lo, hi = np.minimum(a, L), np.maximum(a, L)
        gap = hi - lo
        close = gap < COLLISION_TOL
        with np.errstate(divide="ignore"):
            far = -lo * s + np.log(-np.expm1(-np.where(close, 1.0, gap) * s)) - np.log(np.where(close, 1.0, gap))
            near = -lo * s + np.log(s)
        return np.where(close, near, far)

    def log_hdiff(a, log_a):
        # |h(a) - h(L)| / |L - a| with log h(y) = -ys - log y
        lo_is_a = a <= L
        lo = np.where(lo_is_a, a, L)
        hi = np.where(lo_is_a, L, a)
        log_lo = np.where(lo_is_a, log_a, log_L)
        log_hi = np.where(lo_is_a, log_L, log_a)
        gap = hi - lo
        close = gap < COLLISION_TOL
        lh_lo = -lo * s - log_lo
        lh_hi = -hi * s - log_hi
        with np.errstate(divide="ignore", invalid="ignore"):
            far = lh_lo + np.log(-np.expm1(lh_hi - lh_lo)) - np.log(np.where(close, 1.0, gap))
            near = -lo * s + np.log(s / lo + 1.0 / lo**2)
        return np.where(close, near, far)

    lc = np.where(coef.c_defined, coef.log_c[:-1], 0.0)
    ld = np.where(coef.d_defined, coef.log_d[:-1], 0.0)
    c, d = np.exp(lc), np.exp(ld)
    both = np.logaddexp(log_hdiff(c, lc)[:, None], log_hdiff(d, ld)[None, :])
    out[:-1, :-1] = np.where(np.isfinite(coef.log_u), both + coef.log_u, -np.inf)
    out[:-1, -1] = np.where(coef.c_defined, log_phi(c, lc) + coef.log_u1, -np.inf)
    out[-1, :-1] = np.where(coef.d_defined, log_phi(d, ld) + coef.log_u2, -np.inf)
    out[-1, -1] = -L * s
    return out


def density_from_coefficients(coef: Coefficients2D, s: float) -> np.ndarray:
    """Unnormalized-check-free ``N x N`` density grid at transformed time ``s``."""
    return _density_grid(coef, s)


def perturbed(coef: Coefficients2D, rel: float) -> Coefficients2D:
    """Copy with every row coefficient scaled by ``1 + rel`` (fault injection)."""
    from dataclasses import replace

    return replace(coef, log_c=coef.log_c + np.log1p(rel))
