"""CSV writers/readers with round-trip float formatting, and plain SVG plots."""
from __future__ import annotations

import csv
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np

from .state import DenseDistribution

FLOAT_FMT = ".17g"


def fmt(v: float) -> str:
    return format(float(v), FLOAT_FMT)


def write_density_csv(path, rows: Sequence[tuple[float, float, DenseDistribution]]) -> None:
    """Rows ``(w, t, density)`` flattened to ``x1..xD, w, t, prob``."""
    rows = list(rows)
    dims = rows[0][2].space.dims if rows else 1
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{d + 1}" for d in range(dims)] + ["w", "t", "prob"])
        for w, t, dens in rows:
            for coords, p in zip(dens.space.coords, dens.probs):
                wr.writerow([int(c) for c in coords] + [fmt(w), fmt(t), fmt(p)])


def read_density_csv(path) -> list[dict]:
    with open(path) as fh:
        rd = csv.DictReader(fh)
        return [{k: (float(v) if k in ("w", "t", "prob") else int(v)) for k, v in row.items()} for row in rd]


def write_tv_csv(path, rows: Sequence[tuple[float, float, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["w", "t", "tv", "log_tv"])
        for row in rows:
            wr.writerow([fmt(v) for v in row])


def read_tv_csv(path) -> np.ndarray:
    with open(path) as fh:
        rd = csv.reader(fh)
        next(rd)
        return np.array([[float(v) for v in row] for row in rd]).reshape(-1, 4)


# -- SVG ---------------------------------------------------------------------------

W, H, PAD = 480, 320, 40


def _svg(body: list[str], title: str, width=W, height=H) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join(
        [head, f'<rect width="{width}" height="{height}" fill="white"/>',
         f'<text x="{width / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>', *body, "</svg>\n"]
    )


def bar_chart(values: Sequence[float], labels: Sequence[str], title: str) -> str:
    values = np.asarray(values, float)
    top = values.max() if values.size and values.max() > 0 else 1.0
    bw = (W - 2 * PAD) / max(1, values.size)
    body = [f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>']
    for i, (v, lab) in enumerate(zip(values, labels)):
        h = (H - 2 * PAD) * v / top
        x = PAD + i * bw
        body.append(
            f'<rect x="{x + 1:.2f}" y="{H - PAD - h:.2f}" width="{bw - 2:.2f}" height="{h:.2f}" fill="steelblue">'
            f"<title>{escape(str(lab))}: {fmt(v)}</title></rect>"
        )
        if values.size <= 30:
            body.append(f'<text x="{x + bw / 2:.2f}" y="{H - PAD + 14}" text-anchor="middle">{escape(str(lab))}</text>')
    body.append(f'<text x="{PAD - 4}" y="{PAD}" text-anchor="end">{top:.3g}</text>')
    return _svg(body, title)


def heatmap(grid: np.ndarray, title: str, labels: np.ndarray | None = None) -> str:
    """Row index on the vertical axis (token 1 at the top)."""
    grid = np.asarray(grid, float)
    n1, n2 = grid.shape
    size = min((W - 2 * PAD) / n2, (H - 2 * PAD) / n1)
    top = grid.max() if grid.max() > 0 else 1.0
    body = []
    for i in range(n1):
        for j in range(n2):
            shade = int(255 * (1 - grid[i, j] / top))
            x, y = PAD + j * size, PAD + i * size
            tip = f"({i + 1},{j + 1}): {fmt(grid[i, j])}"
            if labels is not None:
                tip += f" {labels[i, j]}"
            body.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{size:.2f}" height="{size:.2f}" '
                f'fill="rgb({shade},{shade},255)" stroke="#ccc"><title>{escape(tip)}</title></rect>'
            )
    return _svg(body, title)


def line_chart(xs, series: dict, title: str, xlabel: str = "", ylabel: str = "") -> str:
    xs = np.asarray(xs, float)
    ys_all = np.concatenate([np.asarray(v, float)[np.isfinite(v)] for v in series.values()] or [np.zeros(1)])
    lo, hi = (ys_all.min(), ys_all.max()) if ys_all.size else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1.0
    x0, x1 = xs.min(), xs.max() if xs.max() > xs.min() else xs.min() + 1

    def px(x):
        return PAD + (W - 2 * PAD) * (x - x0) / (x1 - x0)

    def py(y):
        return H - PAD - (H - 2 * PAD) * (y - lo) / (hi - lo)

    colors = ["steelblue", "firebrick", "seagreen", "darkorange", "purple", "gray"]
    body = [
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="12" y="{H / 2}" transform="rotate(-90 12 {H / 2})" text-anchor="middle">{escape(ylabel)}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end">{hi:.3g}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end">{lo:.3g}</text>',
    ]
    for k, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, float)
        ok = np.isfinite(ys)
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs[ok], ys[ok]))
        c = colors[k % len(colors)]
        body.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        body.append(f'<text x="{W - PAD}" y="{PAD + 14 * k}" text-anchor="end" fill="{c}">{escape(str(name))}</text>')
    return _svg(body, title)


REGION_COLORS = {"R1": "#1b9e77", "R2_1": "#d95f02", "R2_2": "#7570b3", "R3": "#e7298a", "R4": "#666666"}


def region_map(n_data: int, membership: dict, title: str) -> str:
    size = min((W - 2 * PAD), (H - 2 * PAD)) / n_data
    body = []
    for i in range(n_data):
        for j in range(n_data):
            name = membership.get((i + 1, j + 1))
            fill = REGION_COLORS.get(name, "white")
            x, y = PAD + j * size, PAD + i * size
            body.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{size:.2f}" height="{size:.2f}" fill="{fill}" '
                f'stroke="#ccc"><title>({i + 1},{j + 1}) {name or "outside"}</title></rect>'
            )
    for k, (name, c) in enumerate(REGION_COLORS.items()):
        body.append(f'<text x="{W - PAD}" y="{PAD + 14 * k}" text-anchor="end" fill="{c}">{name}</text>')
    return _svg(body, title)


def write_text(path, text: str) -> None:
    Path(path).write_text(text)
