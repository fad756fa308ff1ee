"""Terminal densities and TV curves for the built-in figure-class scenarios.

Writes one directory per scenario under ``out/figures`` with density CSVs,
SVG charts and the TV report. Usage: ``python3 scripts/figure_panels.py [out]``.
"""
import sys
from pathlib import Path

from maskcfg.cli import main

SCENARIOS = ("clusters-disjoint", "clusters-overlap", "diamonds-disjoint", "diamonds-overlap")


def run(root: Path) -> None:
    for name in SCENARIOS:
        out = root / name
        for cmd in (["evolve", "--validate"], ["tv-curve", "--t0", "0.5"]):
            code = main([*cmd, "--config", name, "--out", str(out)])
            if code:
                raise SystemExit(f"{name} {cmd[0]} exited {code}")


if __name__ == "__main__":
    run(Path(sys.argv[1] if len(sys.argv) > 1 else "out/figures"))
