"""Scenario configs: JSON loading and the built-in figure-class mixtures."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .state import MixtureModel, StateSpace, load_mixture

CLUSTER = np.array([0.1, 0.2, 0.4, 0.2, 0.1])


class ConfigError(ValueError):
    """Scenario file is missing, malformed or inconsistent."""


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    mixture: MixtureModel
    guided_class: str
    ws: tuple = (0.0, 1.0, 2.0, 5.0)
    T: float = 1.0
    times: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if any(not w >= -1 for w in self.ws):
            raise ConfigError("every w must be >= -1")
        if any(not 0 <= t <= self.T for t in self.times):
            raise ConfigError("times must lie in [0, T]")
        if self.guided_class not in self.mixture.labels:
            raise ConfigError(f"unknown guided class {self.guided_class!r}")

    @property
    def class_index(self) -> int:
        return self.mixture.class_of(self.guided_class)


def _clusters(n_data: int, starts) -> np.ndarray:
    v = np.zeros(n_data)
    for s in starts:
        v[s : s + CLUSTER.size] += CLUSTER
    return v / v.sum()


def clusters_1d(overlap: bool, n: int = 21) -> MixtureModel:
    """Two classes, each a pair of five-point clusters; shifted to overlap or not."""
    nd = n - 1
    first = _clusters(nd, (0, 10))
    second = _clusters(nd, (3, 13) if overlap else (5, 15))
    return MixtureModel.from_data(StateSpace(1, n), [0.5, 0.5], [first, second])


def _diamond(nd: int, center, radius: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(1, nd + 1), np.arange(1, nd + 1), indexing="ij")
    h = radius + 1 - np.abs(i - center[0]) - np.abs(j - center[1])
    v = np.clip(h, 0, None).astype(float)
    return v / v.sum()


def diamonds_2d(overlap: bool, n: int = 11) -> MixtureModel:
    """Two diamond-shaped classes; with ``overlap`` the second sits near the first."""
    nd = n - 1
    first = _diamond(nd, (3, 3), 2)
    second = _diamond(nd, (5, 5) if overlap else (8, 8), 2)
    return MixtureModel.from_data(StateSpace(2, n), [0.5, 0.5], [first, second])


def regions_example() -> MixtureModel:
    """N=5 grid: class 1 uniform on {1,2,3}^2, class 2 uniform on {2,3,4}^2."""
    nd = 4
    first = np.zeros((nd, nd))
    first[:3, :3] = 1 / 9
    second = np.zeros((nd, nd))
    second[1:, 1:] = 1 / 9
    return MixtureModel.from_data(StateSpace(2, 5), [0.5, 0.5], [first, second])


def toy_3d(seed: int = 0) -> MixtureModel:
    from .corpus import random_mixture

    return random_mixture(np.random.default_rng(seed), 3, 3, 2, density=0.7)


def self_guidance_1d(n: int = 6) -> MixtureModel:
    v = np.arange(1, n, dtype=float)
    return MixtureModel.from_data(StateSpace(1, n), [1.0], [v / v.sum()])


BUILTIN = {
    "clusters-disjoint": lambda: Scenario("clusters-disjoint", clusters_1d(False), "z1", (0, 1, 2, 5, 10)),
    "clusters-overlap": lambda: Scenario("clusters-overlap", clusters_1d(True), "z1", (0, 1, 2, 5, 10)),
    "diamonds-disjoint": lambda: Scenario("diamonds-disjoint", diamonds_2d(False), "z1", (0, 1, 2, 5, 10)),
    "diamonds-overlap": lambda: Scenario(
        "diamonds-overlap", diamonds_2d(True), "z1", (0, 1, 2, 5, 10), times=(0, 0.25, 0.5, 0.75, 0.9, 1.0)
    ),
    "regions-example": lambda: Scenario("regions-example", regions_example(), "z1", (0, 1, 4, 16)),
    "toy-3d": lambda: Scenario("toy-3d", toy_3d(), "z1", (0, 1, 2), times=(0, 0.5, 0.9)),
    "self-guidance": lambda: Scenario("self-guidance", self_guidance_1d(), "z1", (0, 1, 2, 5, 10)),
}


def load_scenario(ref: str) -> Scenario:
    """Resolve a built-in name or read a scenario JSON file."""
    if ref in BUILTIN:
        return BUILTIN[ref]()
    path = Path(ref)
    if not path.is_file():
        raise ConfigError(f"no scenario named {ref!r} and no such file")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        if isinstance(doc.get("mixture"), str):
            mpath = Path(doc["mixture"])
            if not mpath.is_absolute():
                mpath = path.parent / mpath
            if not mpath.is_file():
                raise ConfigError(f"mixture file {mpath} not found")
            mixture = load_mixture(mpath)
        else:
            mixture = MixtureModel.from_dict(doc.get("mixture", doc))
        return Scenario(
            name=doc.get("name", path.stem),
            mixture=mixture,
            guided_class=str(doc.get("guided_class", mixture.labels[0])),
            ws=tuple(float(w) for w in doc.get("w", (0.0, 1.0, 2.0, 5.0))),
            T=float(doc.get("T", 1.0)),
            times=tuple(float(t) for t in doc.get("times", (0.0, 0.25, 0.5, 0.75, 1.0))),
            seed=int(doc.get("seed", 0)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def scenario_to_dict(sc: Scenario) -> dict:
    doc = sc.mixture.to_dict()
    doc.update(
        {"name": sc.name, "T": sc.T, "w": list(sc.ws), "times": list(sc.times),
         "guided_class": sc.guided_class, "seed": sc.seed}
    )
    return doc
