"""Core domain types: state spaces, dense distributions, class mixtures.

Coordinates are 1-based on the public surface, with token ``N`` the mask.
Flat indices run over ``{1..N}^D`` in row-major order with the first
coordinate most significant, i.e. ``index(x) = sum_d (x_d - 1) N^(D-1-d)``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import SupportViolation, UnnormalizableTilt

logger = logging.getLogger(__name__)

MAX_STATES = 2**24
SUM_TOL = 1e-10
NEG_CLAMP = 1e-12
DEFAULT_TAU = 1e-12


@dataclass(frozen=True)
class StateSpace:
    dims: int
    alphabet: int

    def __post_init__(self):
        if self.dims < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if self.alphabet < 2:
            raise ValueError(f"alphabet must be >= 2, got {self.alphabet}")
        if self.alphabet**self.dims > MAX_STATES:
            raise ValueError(
                f"{self.alphabet}^{self.dims} states exceeds the dense limit of {MAX_STATES}"
            )

    @property
    def mask(self) -> int:
        return self.alphabet

    @property
    def total_states(self) -> int:
        return self.alphabet**self.dims

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.alphabet,) * self.dims

    @property
    def data_shape(self) -> tuple[int, ...]:
        """Grid shape of the non-mask tokens, ``(N-1,)*D``."""
        return (self.alphabet - 1,) * self.dims

    def index(self, x: Sequence[int]) -> int:
        x = tuple(int(v) for v in x)
        if len(x) != self.dims or not all(1 <= v <= self.alphabet for v in x):
            raise ValueError(f"{x} is not a state of {self}")
        return int(np.ravel_multi_index(tuple(v - 1 for v in x), self.shape))

    def state(self, idx: int) -> tuple[int, ...]:
        return tuple(int(v) + 1 for v in np.unravel_index(int(idx), self.shape))

    @cached_property
    def coords(self) -> np.ndarray:
        """``(N^D, D)`` array of 1-based coordinates of every flat index."""
        grids = np.indices(self.shape).reshape(self.dims, -1).T + 1
        grids.setflags(write=False)
        return grids

    @cached_property
    def masked(self) -> np.ndarray:
        """Boolean ``(N^D, D)``: which coordinates hold the mask token."""
        m = self.coords == self.alphabet
        m.setflags(write=False)
        return m

    @cached_property
    def unmasked_states(self) -> np.ndarray:
        """Boolean ``(N^D,)``: states with no mask coordinate."""
        m = ~self.masked.any(axis=1)
        m.setflags(write=False)
        return m

    @property
    def all_mask_index(self) -> int:
        return self.total_states - 1

    def states(self) -> Iterable[tuple[int, ...]]:
        for row in self.coords:
            yield tuple(int(v) for v in row)


@dataclass(frozen=True, eq=False)
class DenseDistribution:
    space: StateSpace
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        if p.shape != (self.space.total_states,):
            raise ValueError(f"expected {self.space.total_states} entries, got {p.size}")
        if not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite")
        low = p < 0
        if low.any():
            if p.min() <= -NEG_CLAMP:
                raise ValueError(f"negative probability {p.min():.3e}")
            logger.debug("clamping %d tiny negative entries to zero", int(low.sum()))
            p[low] = 0.0
        total = p.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_grid(cls, space: StateSpace, grid: np.ndarray) -> "DenseDistribution":
        """Build from an array over the full ``{1..N}^D`` grid."""
        return cls(space, np.asarray(grid).reshape(-1))

    @classmethod
    def from_data(cls, space: StateSpace, data: np.ndarray) -> "DenseDistribution":
        """Build from an array over non-mask states only (mask mass zero)."""
        data = np.asarray(data, dtype=float).reshape(space.data_shape)
        grid = np.zeros(space.shape)
        grid[(slice(0, space.alphabet - 1),) * space.dims] = data
        return cls(space, grid.reshape(-1))

    @classmethod
    def point_mass(cls, space: StateSpace, x: Sequence[int]) -> "DenseDistribution":
        p = np.zeros(space.total_states)
        p[space.index(x)] = 1.0
        return cls(space, p)

    def grid(self) -> np.ndarray:
        return self.probs.reshape(self.space.shape)

    def data_grid(self) -> np.ndarray:
        """View restricted to non-mask tokens, shape ``(N-1,)*D``."""
        return self.grid()[(slice(0, self.space.alphabet - 1),) * self.space.dims]

    def __getitem__(self, x: Sequence[int]) -> float:
        return float(self.probs[self.space.index(x)])

    def mask_mass(self) -> float:
        return float(self.probs[~self.space.unmasked_states].sum())


@dataclass(frozen=True)
class GuidanceConfig:
    class_index: int
    w: float

    def __post_init__(self):
        if not self.w >= -1:
            raise ValueError(f"guidance strength must be >= -1, got {self.w}")


@dataclass(frozen=True, eq=False)
class MixtureModel:
    space: StateSpace
    labels: tuple[str, ...]
    weights: np.ndarray
    conditionals: tuple[DenseDistribution, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        labels = tuple(str(v) for v in self.labels)
        conds = tuple(self.conditionals)
        if not (len(labels) == w.size == len(conds)) or w.size == 0:
            raise ValueError("labels, weights and conditionals must have equal nonzero length")
        if len(set(labels)) != len(labels):
            raise ValueError("class labels must be unique")
        if np.any(w <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {w.sum()!r}")
        masked = ~self.space.unmasked_states
        for lab, c in zip(labels, conds):
            if c.space != self.space:
                raise ValueError(f"class {lab} lives on {c.space}, expected {self.space}")
            if np.any(c.probs[masked] > 0):
                raise ValueError(f"class {lab} puts mass on masked states")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "conditionals", conds)
        full = self.full()
        for c in conds:
            assert not np.any((c.probs > 0) & (full.probs <= 0))

    @classmethod
    def from_data(
        cls,
        space: StateSpace,
        weights: Sequence[float],
        data: Sequence[np.ndarray],
        labels: Sequence[str] | None = None,
    ) -> "MixtureModel":
        """Build from per-class arrays over non-mask states."""
        if labels is None:
            labels = [f"z{k + 1}" for k in range(len(data))]
        conds = tuple(DenseDistribution.from_data(space, d) for d in data)
        return cls(space, tuple(labels), np.asarray(weights, dtype=float), conds)

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def class_of(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown class label {label!r}") from None

    def full(self) -> DenseDistribution:
        return full_distribution(self)

    def conditional(self, k: int) -> DenseDistribution:
        return self.conditionals[k]

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "N": self.space.alphabet,
            "D": self.space.dims,
            "classes": [
                {"label": lab, "weight": float(a), "probs": c.data_grid().reshape(-1).tolist()}
                for lab, a, c in zip(self.labels, self.weights, self.conditionals)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureModel":
        space = StateSpace(int(doc["D"]), int(doc["N"]))
        classes = doc["classes"]
        n_data = (space.alphabet - 1) ** space.dims
        data = []
        for c in classes:
            probs = np.asarray(c["probs"], dtype=float)
            if probs.size != n_data:
                raise ValueError(
                    f"class {c.get('label')!r}: expected {n_data} probabilities over non-mask states, "
                    f"got {probs.size}"
                )
            data.append(probs)
        return cls.from_data(
            space, [c["weight"] for c in classes], data, [c["label"] for c in classes]
        )


def load_mixture(path: str | Path) -> MixtureModel:
    with open(path) as fh:
        return MixtureModel.from_dict(json.load(fh))


def save_mixture(m: MixtureModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(m.to_dict(), fh, indent=1)


@dataclass(frozen=True)
class SupportSet:
    space: StateSpace
    members: frozenset
    marginal_supports: tuple[frozenset, ...] = field(default=())

    def __contains__(self, x) -> bool:
        return tuple(x) in self.members

    def __len__(self) -> int:
        return len(self.members)


# -- operations ---------------------------------------------------------------


def full_distribution(m: MixtureModel) -> DenseDistribution:
    probs = np.zeros(m.space.total_states)
    for a, c in zip(m.weights, m.conditionals):
        probs += a * c.probs
    return DenseDistribution(m.space, probs)


def log_tilt_mass(p: np.ndarray, q: np.ndarray, w: float) -> np.ndarray:
    """Elementwise ``log(p^{-w} q^{1+w})``.

    Entries with ``q == 0`` are ``-inf`` whenever the exponent ``1+w`` is
    positive; at ``w == -1`` the factor ``q^0`` is taken as 1 so the result
    is ``log p``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        lp = np.log(p)
        lq = np.log(q)
    if w == -1:
        return lp
    if w == 0:
        return lq
    if np.any((p <= 0) & (q > 0)):
        raise SupportViolation("conditional has mass outside the support of p")
    out = np.full(p.shape, -np.inf)
    keep = q > 0
    out[keep] = -w * lp[keep] + (1 + w) * lq[keep]
    return out


def _tilt_logs(m: MixtureModel, g: GuidanceConfig) -> np.ndarray:
    p = m.full().probs
    q = m.conditional(g.class_index).probs
    return log_tilt_mass(p, q, g.w)


def log_normalizer_Z(m: MixtureModel, g: GuidanceConfig) -> float:
    lu = _tilt_logs(m, g)
    if not np.isfinite(lu).any():
        raise UnnormalizableTilt("tilted mass is zero everywhere")
    return float(logsumexp(lu))


def normalizer_Z(m: MixtureModel, g: GuidanceConfig) -> float:
    """Sum over non-mask states of ``p(x)^{-w} p(x|z)^{1+w}``."""
    return float(np.exp(log_normalizer_Z(m, g)))


def tilted_distribution(m: MixtureModel, g: GuidanceConfig) -> DenseDistribution:
    lu = _tilt_logs(m, g)
    if not np.isfinite(lu).any():
        raise UnnormalizableTilt("tilted mass is zero everywhere")
    probs = np.exp(lu - logsumexp(lu))
    return DenseDistribution(m.space, probs)


def alpha_divergence(mu1: DenseDistribution, mu2: DenseDistribution, alpha: float) -> float:
    """Renyi-type divergence ``log(sum mu1^a mu2^(1-a)) / (a-1)``."""
    if not (alpha > 0 and alpha != 1):
        raise ValueError(f"alpha must lie in (0, inf) minus {{1}}, got {alpha}")
    if mu1.space != mu2.space:
        raise ValueError("distributions live on different spaces")
    p1, p2 = mu1.probs, mu2.probs
    if np.any((p1 > 0) & (p2 <= 0)):
        raise SupportViolation("mu1 has mass outside the support of mu2")
    keep = p1 > 0
    terms = alpha * np.log(p1[keep]) + (1 - alpha) * np.log(p2[keep])
    return float(logsumexp(terms) / (alpha - 1))


def support_of(d: DenseDistribution, tau: float = DEFAULT_TAU) -> SupportSet:
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    idx = np.flatnonzero(d.probs > tau)
    coords = d.space.coords[idx]
    members = frozenset(tuple(int(v) for v in row) for row in coords)
    marginals = tuple(frozenset(int(v) for v in coords[:, k]) for k in range(d.space.dims))
    return SupportSet(d.space, members, marginals)
