"""Brute-force reference solvers for the reverse dynamics at any dimension.

Both solvers act on the full ``N^D`` vector. The exact solver uses the time
change ``s = ln(1/r(t))``, under which the generator is the constant ``base``,
and evaluates ``exp(s base) q0`` by uniformization. The terminal time is
handled by pushing mass through the embedded jump chain, which is acyclic
because every jump unmasks a coordinate.

Uniformization costs about ``s * max exit rate`` matrix-vector products, which
explodes for strong guidance (exit rates near ``1e7`` at ``w = 10`` on an
11-token grid). Past ``UNIFORM_BUDGET`` terms, small spaces switch to a dense
Pade exponential; large spaces stay on uniformization and are just slow.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.stats import poisson

from .closed_form import TimeRatio
from .errors import StepTooCoarse
from .rates import ReverseGenerator, time_factor
from .state import DenseDistribution

logger = logging.getLogger(__name__)

TAIL_MASS = 1e-14
UNIFORM_BUDGET = 200_000
DENSE_LIMIT = 4096
ODE_NEG_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class OracleSolution:
    times: np.ndarray
    densities: list
    method: str
    tolerance: float

    def at(self, t: float) -> DenseDistribution:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.densities[k]


def _to_distribution(space, vec: np.ndarray) -> DenseDistribution:
    vec = np.where(np.abs(vec) < 1e-300, 0.0, vec)
    return DenseDistribution(space, vec)


def absorb(gen: ReverseGenerator, q0: np.ndarray) -> np.ndarray:
    """Law as ``s -> infinity``: route mass along the embedded jump chain.

    States are visited in order of decreasing mask count, so every state's
    inflow is complete before its outflow is distributed.
    """
    space = gen.space
    base = gen.base.tocsc()
    exit_rates = gen.exit_rates
    order = np.argsort(-space.masked.sum(axis=1), kind="stable")
    mass = np.array(q0, dtype=float)
    for x in order:
        e = exit_rates[x]
        if e <= 0 or mass[x] == 0:
            continue
        lo, hi = base.indptr[x], base.indptr[x + 1]
        rows, vals = base.indices[lo:hi], base.data[lo:hi]
        off = rows != x
        mass[rows[off]] += mass[x] * vals[off] / e
        mass[x] = 0.0
    return mass


def expm_uniformized(base: sp.spmatrix, s_values: Sequence[float], q0: np.ndarray):
    """``exp(s base) q0`` for each finite ``s`` by a Poisson mixture of stochastic powers.

    Returns the vectors and the largest truncated Poisson tail (an upper bound
    on the per-entry error, since every power stays in the simplex).
    """
    s_values = np.asarray(s_values, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    lam = float(np.max(-base.diagonal())) if base.shape[0] else 0.0
    out = np.zeros((s_values.size, q0.size))
    if lam <= 0:
        out[:] = q0
        return out, 0.0
    P = (sp.identity(base.shape[0], format="csr") + base.tocsr() / lam).tocsr()
    mus = lam * s_values
    k_max = int(max(poisson.isf(TAIL_MASS, mu) if mu > 0 else 0 for mu in mus)) + 1
    ks = np.arange(k_max + 1)
    weights = np.array([poisson.pmf(ks, mu) if mu > 0 else (ks == 0).astype(float) for mu in mus])
    tails = 1.0 - weights.sum(axis=1)
    v = q0.copy()
    for k in range(k_max + 1):
        w_k = weights[:, k]
        nz = w_k > 0
        if nz.any():
            out[nz] += w_k[nz, None] * v[None, :]
        v = P @ v
    return out, float(max(0.0, tails.max()))


def evolve_exact(
    gen: ReverseGenerator, T: float, times: Sequence[float], q0: DenseDistribution
) -> OracleSolution:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > T):
        raise ValueError(f"times must lie in [0, {T}]")
    s = np.array([TimeRatio(T, float(t)).s for t in times])
    finite = np.isfinite(s)
    vecs = np.zeros((times.size, gen.space.total_states))
    tol = 0.0
    method = "matrix-exponential"
    if finite.any():
        work = float(gen.exit_rates.max(initial=0.0)) * s[finite].max()
        if work > UNIFORM_BUDGET and gen.space.total_states <= DENSE_LIMIT:
            logger.debug("stiff generator (%.3g uniformization terms), using dense Pade", work)
            dense = gen.dense()
            vecs[finite] = [expm(si * dense) @ q0.probs for si in s[finite]]
            method, tol = "pade-dense", float("nan")
        else:
            vecs[finite], tol = expm_uniformized(gen.base, s[finite], q0.probs)
    if (~finite).any():
        logger.debug("terminal time requested, using jump-chain absorption")
        vecs[~finite] = absorb(gen, q0.probs)
    dens = [_to_distribution(gen.space, v / v.sum()) for v in vecs]
    return OracleSolution(times, dens, method, tol)


def evolve_ode(
    gen: ReverseGenerator, T: float, times: Sequence[float], q0: DenseDistribution, step: float
) -> OracleSolution:
    """Classical RK4 on ``dq/dt = time_factor(T - t) base q`` with fixed step."""
    if not step > 0:
        raise ValueError("step must be positive")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be nondecreasing")
    if np.any(times < 0) or np.any(times > T - step):
        raise ValueError(f"times must lie in [0, T - step] = [0, {T - step}]")
    base = gen.base.tocsr()

    def f(t, q):
        return time_factor(T - t) * (base @ q)

    q = np.array(q0.probs, dtype=float)
    t = 0.0
    dens = []
    for target in times:
        span = target - t
        n = int(np.ceil(span / step - 1e-12)) if span > 0 else 0
        h = span / n if n else 0.0
        for _ in range(n):
            k1 = f(t, q)
            k2 = f(t + h / 2, q + h / 2 * k1)
            k3 = f(t + h / 2, q + h / 2 * k2)
            k4 = f(t + h, q + h * k3)
            q = q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        t = float(target)
        if q.min() < -ODE_NEG_TOL:
            raise StepTooCoarse(f"probability {q.min():.3e} at t={t}; reduce the step")
        clean = np.clip(q, 0.0, None)
        dens.append(_to_distribution(gen.space, clean / clean.sum()))
    return OracleSolution(times, dens, "ode", step)
