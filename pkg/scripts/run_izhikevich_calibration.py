"""Izhikevich gScale calibration: sweep, optima, fit, and a text table of the curve.

Usage: python scripts/run_izhikevich_calibration.py [--config PATH] [--output DIR] [--workers N]
"""

import argparse
import json
import sys
from pathlib import Path

from snnscale.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run(config: Path, output: Path, workers: int) -> dict:
    code = main(["sweep", str(config), "--output", str(output), "--workers", str(workers)])
    if code != 0:
        sys.exit(code)
    return json.loads((output / "fit.json").read_text())


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, default=ROOT / "configs" / "izhikevich_calibration.json")
    p.add_argument("--output", type=Path, default=ROOT / "results" / "izhikevich_calibration")
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    fit = run(a.config, a.output, a.workers)
    print("\nnConn  gScale*  fitted")
    for line in (a.output / "optima.csv").read_text().splitlines()[1:]:
        n, g = line.split(",")
        y = fit["k1"] / (fit["k2"] + int(n)) + fit["k3"]
        print(f"{int(n):5d}  {float(g):7.4f}  {y:7.4f}")
    print(f"MAPE {fit['mapePercent']:.2f}%  ->  {a.output}")
