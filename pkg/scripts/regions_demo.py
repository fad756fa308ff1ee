"""Region decomposition of the 5-token example and how its weights approach the limit.

Prints each region, then the terminal mass per region for growing w next to
the strong-guidance limit.
"""
import numpy as np

from maskcfg.analysis import REGION_NAMES, limit_distribution_2d, region_decomposition_2d
from maskcfg.closed_form import sampled_distribution_2d
from maskcfg.scenarios import regions_example
from maskcfg.state import GuidanceConfig


def main() -> None:
    m = regions_example()
    rd = region_decomposition_2d(m, "z1")
    for name in REGION_NAMES:
        print(f"{name:5s} {sorted(rd.regions[name])}")
    lim = limit_distribution_2d(rd, m)

    def mass(d, name):
        return sum(d[x] for x in rd.regions[name])

    print("w      " + "  ".join(f"{n:>6s}" for n in REGION_NAMES))
    for w in (0, 1, 4, 16, 64):
        q = sampled_distribution_2d(m, GuidanceConfig(0, float(w)))
        print(f"{w:<6d} " + "  ".join(f"{mass(q, n):6.4f}" for n in REGION_NAMES))
    print("limit  " + "  ".join(f"{mass(lim, n):6.4f}" for n in REGION_NAMES))
    assert np.isclose(sum(mass(lim, n) for n in REGION_NAMES), 1.0)


if __name__ == "__main__":
    main()
