"""Occupancy against block size for a kernel's register and shared-memory use.

Usage: python scripts/occupancy_curve.py [--device cc30] [--regs 32] [--shared 0]
"""

import argparse

from snnscale import occupancy

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--device", default="cc30", choices=sorted(occupancy.PRESETS))
    p.add_argument("--regs", type=int, default=32)
    p.add_argument("--shared", type=int, default=0)
    a = p.parse_args()
    dev = occupancy.device_preset(a.device)
    size, best = occupancy.recommend_block_size(dev, a.regs, a.shared)
    for threads, occ in occupancy.occupancy_curve(dev, a.regs, a.shared):
        mark = "  <- recommended" if threads == size else ""
        print(f"{threads:5d} {occ:5.3f} {'#' * round(occ * 40)}{mark}")
