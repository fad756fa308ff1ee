"""Reverse-time generators of the masking process, unguided and guided.

For masking noise every reverse rate out of ``x`` unmasks a single
coordinate, and the concrete score ``p_t(y)/p_t(x)`` of such a move equals
``e^{-t}/(1-e^{-t})`` times a time-independent ratio of partial marginals.
Raising to the powers ``-w`` and ``1+w`` keeps exactly one copy of that
factor, so a generator is stored as the constant matrix ``base`` and the
rate at time ``t`` is ``time_factor(t) * base`` for every dimension.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import IncompatibleSupports, ZeroMarginal
from .state import DenseDistribution, GuidanceConfig, MixtureModel, StateSpace

logger = logging.getLogger(__name__)


def time_factor(t):
    """``e^{-t}/(1-e^{-t})``; infinite at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        out = 1.0 / np.expm1(t)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class ReverseGenerator:
    space: StateSpace
    base: sp.csc_matrix
    kind: str
    w: float | None = None
    diagnostics: dict = field(default_factory=dict)

    time_factor = staticmethod(time_factor)

    def rate(self, t: float) -> sp.csc_matrix:
        return self.base * time_factor(t)

    @property
    def exit_rates(self) -> np.ndarray:
        return -self.base.diagonal()

    def dense(self) -> np.ndarray:
        return self.base.toarray()

    def unmask_table(self) -> np.ndarray:
        """Rates as ``(N^D, D, N-1)``: from state x, unmask coordinate d to token v."""
        space = self.space
        n, dims = space.alphabet, space.dims
        table = np.zeros((space.total_states, dims, n - 1))
        coo = self.base.tocoo()
        off = coo.row != coo.col
        rows, cols, vals = coo.row[off], coo.col[off], coo.data[off]
        changed = space.coords[rows] != space.coords[cols]
        d = np.argmax(changed, axis=1)
        v = space.coords[rows, d] - 1
        table[cols, d, v] = vals
        return table


def _partial_marginals(mu: np.ndarray, space: StateSpace) -> np.ndarray:
    """For every state x, ``sum_{u: u_UM = x_UM} mu(u)`` over UM = unmasked coords of x."""
    grid = np.asarray(mu, dtype=float).reshape(space.shape)
    out = np.empty(space.total_states)
    patterns, inverse = np.unique(space.masked, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pat in enumerate(patterns):
        axes = tuple(int(a) for a in np.flatnonzero(pat))
        marg = grid.sum(axis=axes) if axes else grid
        members = np.flatnonzero(inverse == k)
        keep = [d for d in range(space.dims) if not pat[d]]
        if keep:
            idx = tuple(space.coords[members, d] - 1 for d in keep)
            out[members] = marg[idx]
        else:
            out[members] = marg
    return out


def _single_unmask_pairs(space: StateSpace):
    """All ``(dst, src)`` flat-index pairs where dst unmasks one coordinate of src."""
    n = space.alphabet
    dsts, srcs = [], []
    for d in range(space.dims):
        src = np.flatnonzero(space.masked[:, d])
        stride = n ** (space.dims - 1 - d)
        for v in range(1, n):
            dsts.append(src + (v - n) * stride)
            srcs.append(src)
    if not dsts:
        return np.empty(0, int), np.empty(0, int)
    return np.concatenate(dsts), np.concatenate(srcs)


def _assemble(space: StateSpace, dst, src, vals) -> sp.csc_matrix:
    keep = vals != 0
    dst, src, vals = dst[keep], src[keep], vals[keep]
    off = sp.csc_matrix((vals, (dst, src)), shape=(space.total_states,) * 2)
    diag = -np.asarray(off.sum(axis=0)).reshape(-1)
    return (off + sp.diags(diag, format="csc")).tocsc()


def unguided_reverse(mu: DenseDistribution, strict: bool = False) -> ReverseGenerator:
    """Reverse generator of the masking process started from ``mu``."""
    space = mu.space
    marg = _partial_marginals(mu.probs, space)
    dst, src = _single_unmask_pairs(space)
    num, den = marg[dst], marg[src]
    dead = den <= 0
    if strict and dead.any():
        raise ZeroMarginal(f"{int(dead.sum())} transitions leave zero-marginal states")
    vals = np.zeros(dst.size)
    ok = ~dead
    vals[ok] = num[ok] / den[ok]
    diagnostics = {
        "zero_over_zero": int(dead.sum()),
        "zeroed_columns": sorted(set(int(v) for v in src[dead])),
    }
    return ReverseGenerator(space, _assemble(space, dst, src, vals), "unguided", None, diagnostics)


def guided_base(
    p: DenseDistribution, q: DenseDistribution, w: float, strict: bool = False
) -> ReverseGenerator:
    """Entrywise ``unguided[p]^{-w} * unguided[q]^{1+w}`` with rebuilt diagonal."""
    if not w >= -1:
        raise ValueError(f"guidance strength must be >= -1, got {w}")
    if p.space != q.space:
        raise ValueError("p and q live on different spaces")
    if w == -1:
        gen = unguided_reverse(p, strict)
        return ReverseGenerator(gen.space, gen.base, "guided", w, gen.diagnostics)
    if w == 0:
        gen = unguided_reverse(q, strict)
        return ReverseGenerator(gen.space, gen.base, "guided", w, gen.diagnostics)
    space = p.space
    mp = _partial_marginals(p.probs, space)
    mq = _partial_marginals(q.probs, space)
    dst, src = _single_unmask_pairs(space)
    live = mq[dst] > 0
    if np.any(live & (mp[dst] <= 0)):
        raise IncompatibleSupports("conditional rate positive where the unguided rate is zero")
    dead = mp[src] <= 0
    if strict and dead.any():
        raise ZeroMarginal(f"{int(dead.sum())} transitions leave zero-marginal states")
    vals = np.zeros(dst.size)
    with np.errstate(divide="ignore"):
        lmp, lmq = np.log(mp), np.log(mq)
    lv = -w * (lmp[dst[live]] - lmp[src[live]]) + (1 + w) * (lmq[dst[live]] - lmq[src[live]])
    vals[live] = np.exp(lv)
    diagnostics = {
        "zero_over_zero": int(dead.sum()),
        "zeroed_columns": sorted(set(int(v) for v in src[dead])),
    }
    return ReverseGenerator(space, _assemble(space, dst, src, vals), "guided", w, diagnostics)


def conditional_reverse(m: MixtureModel, class_index: int) -> ReverseGenerator:
    gen = unguided_reverse(m.conditional(class_index))
    return ReverseGenerator(gen.space, gen.base, "conditional", None, gen.diagnostics)


def guided_reverse(m: MixtureModel, g: GuidanceConfig, strict: bool = False) -> ReverseGenerator:
    """Classifier-free guided reverse generator toward class ``g.class_index``."""
    return guided_base(m.full(), m.conditional(g.class_index), g.w, strict)


def concrete_score_rate(
    p_t: DenseDistribution, q_t: DenseDistribution, w: float
) -> sp.csc_matrix:
    """Guided rate at one time built directly from forward marginals ``p_t``, ``q_t``.

    Uses unit forward masking rates, so ``rate(y, x) = (p_t(y)/p_t(x))^{-w} (q_t(y)/q_t(x))^{1+w}``
    for single unmaskings. Intended as an independent check of the factorization.
    """
    space = p_t.space
    dst, src = _single_unmask_pairs(space)
    a, b = p_t.probs, q_t.probs
    vals = np.zeros(dst.size)
    live = (b[dst] > 0) & (b[src] > 0)
    if w == -1:
        live = (a[dst] > 0) & (a[src] > 0)
    ratio_p = np.where(live, a[dst] / np.where(live, a[src], 1.0), 1.0)
    ratio_q = np.where(live, b[dst] / np.where(live, b[src], 1.0), 1.0)
    vals[live] = ratio_p[live] ** (-w) * ratio_q[live] ** (1 + w)
    return _assemble(space, dst, src, vals)


# -- triplet text format --------------------------------------------------------


def write_triplets(gen: ReverseGenerator, path: str | Path) -> None:
    """Write ``base`` as ``row col value`` lines (0-based flat indices)."""
    coo = gen.base.tocoo()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w") as fh:
        fh.write(
            f"# N={gen.space.alphabet} D={gen.space.dims} kind={gen.kind} "
            f"w={'' if gen.w is None else format(gen.w, '.17g')}\n"
        )
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {format(coo.data[k], '.17g')}\n")


def read_triplets(path: str | Path) -> ReverseGenerator:
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        rows = np.loadtxt(fh, ndmin=2)
    space = StateSpace(int(meta["D"]), int(meta["N"]))
    if rows.size:
        base = sp.csc_matrix(
            (rows[:, 2], (rows[:, 0].astype(int), rows[:, 1].astype(int))),
            shape=(space.total_states,) * 2,
        )
    else:
        base = sp.csc_matrix((space.total_states,) * 2)
    w = float(meta["w"]) if meta.get("w") else None
    return ReverseGenerator(space, base, meta["kind"], w)
