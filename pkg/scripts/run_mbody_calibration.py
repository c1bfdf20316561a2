"""Mushroom-body PN-KC calibration at 20 and 40 lateral-horn interneurons.

Runs both sweeps and reports how closely the two fitted curves agree.
Usage: python scripts/run_mbody_calibration.py [--output DIR] [--workers N]
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from snnscale.cli import main
from snnscale.fitting import model

ROOT = Path(__file__).resolve().parent.parent


def run(name: str, output: Path, workers: int) -> dict:
    out = output / name
    code = main(["sweep", str(ROOT / "configs" / f"{name}.json"), "--output", str(out), "--workers", str(workers)])
    if code != 0:
        sys.exit(code)
    return json.loads((out / "fit.json").read_text())


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--output", type=Path, default=ROOT / "results")
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    fits = {n: run(f"mbody_calibration_{n}lhi", a.output, a.workers) for n in (20, 40)}
    x = np.arange(100, 1001, 100, dtype=float)
    curves = {n: model(f["k1"], f["k2"], f["k3"], x) for n, f in fits.items()}
    print("\n nPN   20 LHI    40 LHI")
    for xi, c20, c40 in zip(x, curves[20], curves[40]):
        print(f"{int(xi):4d}  {c20:8.4f}  {c40:8.4f}")
    gap = np.mean(np.abs(curves[40] - curves[20]) / np.abs(curves[20])) * 100
    print(f"mean relative gap between curves: {gap:.2f}%")
