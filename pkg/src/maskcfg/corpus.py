"""Seeded random mixtures used by tests, the validation suite and scripts.

Nonzero entries are drawn from ``uniform(0.5, 1.5)`` before normalizing, so
density ratios stay bounded away from zero and strong-guidance limits settle
well before ``w = 200``.
"""
from __future__ import annotations

import numpy as np

from .state import MixtureModel, StateSpace


def random_distribution(rng: np.random.Generator, shape, density: float = 1.0) -> np.ndarray:
    while True:
        keep = rng.random(shape) < density
        if keep.any():
            break
    v = rng.uniform(0.5, 1.5, shape) * keep
    return v / v.sum()


def random_mixture(
    rng: np.random.Generator, dims: int, n: int, classes: int = 2, density: float = 0.6
) -> MixtureModel:
    """Mixture whose class supports are random subsets of the non-mask grid."""
    space = StateSpace(dims, n)
    data = [random_distribution(rng, space.data_shape, density) for _ in range(classes)]
    a = rng.uniform(0.5, 1.5, classes)
    return MixtureModel.from_data(space, a / a.sum(), data)


def full_support_mixture(rng: np.random.Generator, dims: int, n: int, classes: int = 2) -> MixtureModel:
    return random_mixture(rng, dims, n, classes, density=1.0)


def log_ratio_gap(m: MixtureModel, k: int = 0) -> tuple[float, float]:
    """Largest ``log(p(x|z)/p(x))`` and its margin over the runner-up."""
    p, q = m.full().probs, m.conditional(k).probs
    keep = q > 0
    lr = np.sort(np.log(q[keep] / p[keep]))
    return float(lr[-1]), float(lr[-1] - lr[-2]) if lr.size > 1 else np.inf


def separated_mixture(
    rng: np.random.Generator, dims: int, n: int, gap: float = 0.05, tries: int = 1000
) -> MixtureModel:
    """Full-support mixture whose best density ratio beats the runner-up by ``gap`` in log."""
    for _ in range(tries):
        m = full_support_mixture(rng, dims, n)
        top, margin = log_ratio_gap(m)
        if top > 0 and margin >= gap:
            return m
    raise RuntimeError("no separated mixture found")


def corpus_2d(seed: int, count: int = 10) -> list[MixtureModel]:
    """Alternating sparse and full-support two-class mixtures with N cycling 3, 4, 5."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = (3, 4, 5)[i % 3]
        density = 1.0 if i % 2 else 0.6
        out.append(random_mixture(rng, 2, n, 2, density))
    return out


def corpus_1d(seed: int, count: int = 10) -> list[MixtureModel]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = 3 + i % 6
        density = 1.0 if i % 2 else 0.6
        out.append(random_mixture(rng, 1, n, 2, density))
    return out
