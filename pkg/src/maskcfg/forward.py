"""Closed-form density evolution of the absorbing (masking) forward process.

Every coordinate is masked independently at unit rate, so the transition
kernel over ``{1..N}^D`` is the D-fold tensor power of a single ``N x N``
kernel. We never build the ``N^D x N^D`` matrix; the kernel is applied one
axis at a time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .state import DenseDistribution, StateSpace


@dataclass(frozen=True)
class ForwardKernel:
    space: StateSpace
    t: float

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError(f"time must be nonnegative, got {self.t}")

    def matrix(self) -> np.ndarray:
        """Single-coordinate kernel; column ``j`` is the law at time t from token j."""
        n = self.space.alphabet
        keep = np.exp(-self.t)
        a = np.zeros((n, n))
        a[np.arange(n - 1), np.arange(n - 1)] = keep
        a[n - 1, : n - 1] = -np.expm1(-self.t)
        a[n - 1, n - 1] = 1.0
        return a


def apply_along(grid: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Multiply ``kernel`` into one axis of a tensor."""
    moved = np.moveaxis(grid, axis, 0)
    out = np.tensordot(kernel, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def forward_density(
    mu: DenseDistribution, t: float, order: Sequence[int] | None = None
) -> DenseDistribution:
    """Law at time ``t`` of the masking process started from ``mu``.

    ``order`` permutes the axes the per-coordinate kernel is applied along;
    the kernels commute so the result does not depend on it.
    """
    space = mu.space
    a = ForwardKernel(space, t).matrix()
    grid = mu.grid()
    for axis in order if order is not None else range(space.dims):
        grid = apply_along(grid, a, axis)
    return DenseDistribution(space, grid.reshape(-1))


def forward_density_at(mu: DenseDistribution, x: Sequence[int], t: float) -> float:
    """Evaluate the forward law at a single state without evolving the vector.

    For data distributions (no mass on masked states) this is
    ``e^{-|UM| t} (1-e^{-t})^{D-|UM|} * sum_{y: y_UM = x_UM} mu(y)``, UM being
    the unmasked coordinates of ``x``. Mass already sitting on masked tokens
    is carried with weight 1 in masked coordinates.
    """
    if not t >= 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    space = mu.space
    n = space.alphabet
    x = tuple(int(v) for v in x)
    space.index(x)
    keep = np.exp(-t)
    lost = -np.expm1(-t)
    grid = mu.grid()
    unmasked = [d for d in range(space.dims) if x[d] < n]
    if mu.mask_mass() == 0.0:
        sl = tuple(x[d] - 1 if d in unmasked else slice(0, n - 1) for d in range(space.dims))
        marginal = float(np.sum(grid[sl]))
        k = len(unmasked)
        return keep**k * lost ** (space.dims - k) * marginal
    val = grid
    for d in reversed(range(space.dims)):
        if x[d] < n:
            vec = np.zeros(n)
            vec[x[d] - 1] = keep
        else:
            vec = np.full(n, lost)
            vec[n - 1] = 1.0
        val = np.tensordot(val, vec, axes=(d, 0))
    return float(val)


def forward_generator(space: StateSpace):
    """Sparse full forward generator (for oracle checks only)."""
    import scipy.sparse as sp

    n = space.alphabet
    q1 = np.zeros((n, n))
    q1[np.arange(n - 1), np.arange(n - 1)] = -1.0
    q1[n - 1, : n - 1] = 1.0
    eye = sp.identity(n, format="csr")
    total = sp.csr_matrix((space.total_states, space.total_states))
    for d in range(space.dims):
        term = None
        for k in range(space.dims):
            f = sp.csr_matrix(q1) if k == d else eye
            term = f if term is None else sp.kron(term, f, format="csr")
        total = total + term
    return total.tocsr()
