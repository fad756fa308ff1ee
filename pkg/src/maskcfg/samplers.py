"""Particle samplers for the reverse dynamics driven by exact rates.

Every sampler runs in transformed time ``s = ln(1/r(t))``, where the
generator is the constant ``base``. Particles are processed in fixed-size
blocks; block ``b`` draws from its own Philox stream keyed by ``(seed, b)``,
so output is independent of how blocks are scheduled.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import chisquare

from .closed_form import TimeRatio
from .errors import EventOverflow
from .rates import ReverseGenerator
from .state import DenseDistribution, StateSpace

BLOCK = 32768
TERMINAL_MASK_BOUND = 1e-9


@dataclass(frozen=True, eq=False)
class SampleBatch:
    space: StateSpace
    samples: np.ndarray  # (n, D) 1-based tokens
    seed: int
    scheme: str
    params: dict = field(default_factory=dict)
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    def flat(self) -> np.ndarray:
        strides = self.space.alphabet ** np.arange(self.space.dims - 1, -1, -1)
        return (self.samples - 1) @ strides


def block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(n: int):
    for b, lo in enumerate(range(0, n, BLOCK)):
        yield b, lo, min(n, lo + BLOCK)


class _JumpChain:
    """Embedded jump chain of ``base`` with vectorized next-state lookup."""

    def __init__(self, gen: ReverseGenerator):
        base = gen.base.tocsc()
        base.sort_indices()
        self.exit = gen.exit_rates
        n_states = base.shape[1]
        rows, keys = [], []
        self.first = np.zeros(n_states, dtype=np.int64)
        self.last = np.zeros(n_states, dtype=np.int64)
        filled = 0
        for x in range(n_states):
            lo, hi = base.indptr[x], base.indptr[x + 1]
            r, v = base.indices[lo:hi], base.data[lo:hi]
            off = (r != x) & (v > 0)
            if not off.any() or self.exit[x] <= 0:
                continue
            cum = np.cumsum(v[off]) / v[off].sum()
            cum[-1] = 1.0
            rows.append(r[off])
            keys.append(x + cum)
            self.first[x] = filled
            filled += int(off.sum())
            self.last[x] = filled - 1
        self.rows = np.concatenate(rows) if rows else np.empty(0, int)
        self.keys = np.concatenate(keys) if keys else np.empty(0)

    def step(self, cur: np.ndarray, u: np.ndarray) -> np.ndarray:
        # the clip guards against x + u rounding onto a neighbouring column
        pos = np.searchsorted(self.keys, cur + u, side="right")
        pos = np.clip(pos, self.first[cur], self.last[cur])
        return self.rows[pos]


def _absorb_particles(chain: _JumpChain, cur: np.ndarray, rng, max_events: int, counts: np.ndarray):
    cur = cur.copy()
    while True:
        live = np.flatnonzero(chain.exit[cur] > 0)
        if live.size == 0:
            return cur
        counts[live] += 1
        if counts.max() > max_events:
            raise EventOverflow(f"a particle exceeded {max_events} events")
        cur[live] = chain.step(cur[live], rng.random(live.size))


def _to_batch(space, flat, seed, scheme, params, t0, diagnostics) -> SampleBatch:
    return SampleBatch(
        space=space,
        samples=space.coords[flat].astype(np.int64),
        seed=int(seed),
        scheme=scheme,
        params=params,
        wall_time=time.perf_counter() - t0,
        diagnostics=diagnostics,
    )


def sample_exact_event(gen: ReverseGenerator, T: float, n: int, seed: int) -> SampleBatch:
    """Exact simulation to the terminal time.

    The transformed horizon is infinite, so holding times never truncate a
    path and the terminal law is that of the embedded jump chain.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    t0 = time.perf_counter()
    space = gen.space
    chain = _JumpChain(gen)
    out = np.empty(n, dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    for b, lo, hi in _blocks(n):
        rng = block_rng(seed, b)
        start = np.full(hi - lo, space.all_mask_index)
        cnt = np.zeros(hi - lo, dtype=np.int64)
        out[lo:hi] = _absorb_particles(chain, start, rng, 10 * space.dims, cnt)
        events[lo:hi] = cnt
    diag = {"events_per_particle": np.bincount(events).tolist()}
    return _to_batch(space, out, seed, "exact-event", {"T": T}, t0, diag)


def truncation_eps(gen: ReverseGenerator, T: float, bound: float = TERMINAL_MASK_BOUND) -> float:
    """Gap before ``T`` after which surviving masks carry less than ``bound`` mass.

    Uses ``r^{min(rate, 1)} < bound`` with the slowest positive exit rate.
    """
    rates = gen.exit_rates[gen.exit_rates > 0]
    m = min(1.0, float(rates.min())) if rates.size else 1.0
    r_target = bound ** (1.0 / m)
    return float(-np.log1p(-r_target * -np.expm1(-T)))


def sample_tau_leaping(gen: ReverseGenerator, T: float, steps: int, n: int, seed: int) -> SampleBatch:
    """Tau-leaping on a uniform grid of ``[0, T - eps]``, then exact resolution.

    Per interval and per masked coordinate, the number of unmasking events is
    Poisson with the summed integrated intensity; if at least one fires, the
    new token is drawn proportionally to its rate and extra events are dropped.
    """
    if steps < 1 or n < 1:
        raise ValueError("steps and n must be >= 1")
    t0 = time.perf_counter()
    space = gen.space
    dims, nn = space.dims, space.alphabet
    eps = truncation_eps(gen, T)
    grid = np.linspace(0.0, T - eps, steps + 1)
    s_grid = np.array([TimeRatio(T, float(t)).s for t in grid])
    ds = np.diff(s_grid)
    table = gen.unmask_table()  # (states, D, N-1)
    strides = nn ** np.arange(dims - 1, -1, -1)
    chain = _JumpChain(gen)
    out = np.empty(n, dtype=np.int64)
    dropped = 0
    fired_total = 0
    for b, lo, hi in _blocks(n):
        rng = block_rng(seed, b)
        cur = np.full(hi - lo, space.all_mask_index)
        active = np.arange(hi - lo)
        for k in range(steps):
            active = active[chain.exit[cur[active]] > 0]
            if active.size == 0:
                break
            rates = table[cur[active]]  # (m, D, N-1)
            tot = rates.sum(axis=2)
            live = tot > 0
            counts = np.zeros_like(tot, dtype=np.int64)
            counts[live] = rng.poisson(tot[live] * ds[k])
            fire = counts > 0
            if not fire.any():
                continue
            dropped += int((counts[fire] - 1).sum())
            fired_total += int(fire.sum())
            pi, di = np.nonzero(fire)
            cum = np.cumsum(rates[pi, di], axis=1)
            u = rng.random(pi.size) * cum[:, -1]
            v = np.minimum((cum <= u[:, None]).sum(axis=1), nn - 2)
            np.add.at(cur, active[pi], (v + 1 - nn) * strides[di])
        cnt = np.zeros(hi - lo, dtype=np.int64)
        out[lo:hi] = _absorb_particles(chain, cur, rng, 10 * dims, cnt)
    diag = {"discarded_events": dropped, "applied_events": fired_total, "eps": eps}
    return _to_batch(space, out, seed, "tau-leaping", {"T": T, "steps": steps}, t0, diag)


def sample_uniformization(
    gen: ReverseGenerator, T: float, n: int, seed: int, rate: float | None = None
) -> SampleBatch:
    """Uniformized simulation on ``[0, T - eps]`` in transformed time, then exact resolution.

    Candidate jumps arrive at constant ``rate`` (default: the largest exit
    rate); each is accepted with probability ``exit(x)/rate``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    t0 = time.perf_counter()
    space = gen.space
    lam = float(gen.exit_rates.max()) if rate is None else float(rate)
    if lam < gen.exit_rates.max():
        raise ValueError("uniformization rate below the largest exit rate")
    eps = truncation_eps(gen, T)
    s_end = TimeRatio(T, T - eps).s
    chain = _JumpChain(gen)
    out = np.empty(n, dtype=np.int64)
    for b, lo, hi in _blocks(n):
        rng = block_rng(seed, b)
        cur = np.full(hi - lo, space.all_mask_index)
        ticks = rng.poisson(lam * s_end, size=hi - lo) if lam > 0 else np.zeros(hi - lo, int)
        events = np.zeros(hi - lo, dtype=np.int64)
        for k in range(int(ticks.max()) if ticks.size else 0):
            on = np.flatnonzero((ticks > k) & (chain.exit[cur] > 0))
            if on.size == 0:
                break
            accept = rng.random(on.size) * lam < chain.exit[cur[on]]
            idx = on[accept]
            if idx.size:
                events[idx] += 1
                cur[idx] = chain.step(cur[idx], rng.random(idx.size))
        out[lo:hi] = _absorb_particles(chain, cur, rng, 10 * space.dims, events)
    return _to_batch(space, out, seed, "uniformization", {"T": T, "rate": lam}, t0, {"eps": eps})


def empirical_distribution(b: SampleBatch) -> DenseDistribution:
    if b.n < 1:
        raise ValueError("empty batch")
    counts = np.bincount(b.flat(), minlength=b.space.total_states)
    return DenseDistribution(b.space, counts / b.n)


def chi_square_test(b: SampleBatch, q: DenseDistribution, min_expected: float = 5.0):
    """Goodness of fit of the batch against ``q``; bins with small expectation are pooled.

    Returns ``(statistic, p_value, n_bins)``. Samples landing where ``q`` is
    zero make the statistic infinite.
    """
    counts = np.bincount(b.flat(), minlength=b.space.total_states).astype(float)
    expected = q.probs * b.n
    if np.any((expected == 0) & (counts > 0)):
        return np.inf, 0.0, 0
    big = expected >= min_expected
    obs = list(counts[big])
    exp = list(expected[big])
    small_e = expected[~big].sum()
    if small_e > 0:
        obs.append(counts[~big].sum())
        exp.append(small_e)
    if len(obs) < 2:
        return 0.0, 1.0, len(obs)
    exp = np.array(exp)
    exp *= sum(obs) / exp.sum()
    stat, p = chisquare(np.array(obs), exp)
    return float(stat), float(p), len(obs)


def write_samples_csv(b: SampleBatch, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{d + 1}" for d in range(b.space.dims)] + ["scheme", "seed"])
        for row in b.samples:
            wr.writerow([int(v) for v in row] + [b.scheme, b.seed])


def read_samples_csv(path: str | Path, space: StateSpace) -> np.ndarray:
    with open(path) as fh:
        rd = csv.reader(fh)
        next(rd)
        return np.array([[int(v) for v in row[: space.dims]] for row in rd], dtype=np.int64).reshape(
            -1, space.dims
        )
