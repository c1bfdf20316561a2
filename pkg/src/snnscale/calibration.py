"""Conductance-scale calibration: sweep, rate matching, and the hyperbolic fit.

The pipeline runs one simulation per ``(n_conn, g_scale)`` cell, keeps the
NaN-free cells, picks for every ``n_conn`` the ``g_scale`` whose average rate
is closest to a reference cell's, and fits ``k1 / (k2 + n) + k3`` through
the picks.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import IO, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import engine
from .fitting import FitResult, fit_gscale
from .model import NetworkSpec, build_izhikevich_net, build_mbody_net

RESULTS_FILE = "simulation_result.out"
SWEEP_HEADER = ["nConn", "gScale", "avgSpike", "sumNaNs"]

Template = Callable[[int, float], NetworkSpec]


class CalibrationWarning(UserWarning):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class SweepRow:
    n_conn: int
    g_scale: float
    avg_spike: float
    sum_nans: int


@dataclass(frozen=True)
class SweepFailure:
    n_conn: int
    g_scale: float
    error: str


def log_grid(lo: float, hi: float, num: int) -> list[float]:
    return [float(g) for g in np.geomspace(lo, hi, num)]


# --------------------------------------------------------------- templates
# Module-level so they pickle into worker processes.


def izhikevich_template(n_conn: int, g_scale: float, *, n_neurons: int = 1000, exc_fraction: float = 0.8,
                        seed: int = 0, **kw) -> NetworkSpec:
    return build_izhikevich_net(n_neurons, n_conn, exc_fraction, g_scale, seed, **kw)


def mbody_template(n_pn: int, g_scale: float, *, group: str = "PN-KC", g_scales: Mapping[str, float],
                   n_lhi: int = 20, n_kc: int = 1000, n_dn: int = 100, seed: int = 0, **kw) -> NetworkSpec:
    """Mushroom body with ``n_pn`` projection neurons and ``group``'s gScale swept."""
    scales = dict(g_scales)
    scales[group] = g_scale
    return build_mbody_net(n_pn, n_lhi, n_kc, n_dn, scales, seed, **kw)


def make_template(kind: str, **kwargs) -> Template:
    if kind == "izhikevich":
        return partial(izhikevich_template, **kwargs)
    if kind == "mbody":
        return partial(mbody_template, **kwargs)
    raise ValueError(f"unknown network kind {kind!r}")


# ------------------------------------------------------------------ sweep


def _run_cell(template: Template, target: str, storage: str | None, cell: tuple[int, float]):
    n_conn, g_scale = cell
    try:
        spec = template(n_conn, g_scale)
        result = engine.run(spec, storage)
    except (ValueError, KeyError) as exc:
        return SweepFailure(n_conn, g_scale, str(exc))
    if target not in result.avg_spike:
        return SweepFailure(n_conn, g_scale, f"unknown target population {target!r}")
    return SweepRow(n_conn, g_scale, result.avg_spike[target], result.sum_nans)


def sweep(
    template: Template,
    n_conn_values: Sequence[int],
    g_scale_values: Sequence[float],
    target_population: str,
    *,
    storage: str | None = None,
    workers: int = 1,
    failures: list[SweepFailure] | None = None,
) -> list[SweepRow]:
    """Run every grid cell and return rows sorted by ``(n_conn, g_scale)``.

    All cells share the template's global seed.  Cells whose spec fails to
    build or validate are appended to ``failures`` (when given) instead of
    producing a row.
    """
    if not n_conn_values or not g_scale_values:
        raise ValueError("sweep needs non-empty n_conn and g_scale lists")
    cells = [(int(n), float(g)) for n in n_conn_values for g in g_scale_values]
    job = partial(_run_cell, template, target_population, storage)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(job, cells, chunksize=max(1, len(cells) // (4 * workers))))
    else:
        out = [job(c) for c in cells]
    rows = sorted(r for r in out if isinstance(r, SweepRow))
    if failures is not None:
        failures.extend(sorted((f for f in out if isinstance(f, SweepFailure)),
                               key=lambda f: (f.n_conn, f.g_scale)))
    return rows


def write_rows(rows: Iterable[SweepRow], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in sorted(rows):
        w.writerow([r.n_conn, repr(float(r.g_scale)), repr(float(r.avg_spike)), r.sum_nans])


def read_rows(fh: IO[str]) -> list[SweepRow]:
    reader = csv.DictReader(fh)
    if reader.fieldnames != SWEEP_HEADER:
        raise ValueError(f"expected header {','.join(SWEEP_HEADER)}, got {reader.fieldnames}")
    return [SweepRow(int(r["nConn"]), float(r["gScale"]), float(r["avgSpike"]), int(r["sumNaNs"]))
            for r in reader]


# -------------------------------------------------------------- selection


def _find_reference(rows: Sequence[SweepRow], ref_n_conn: int, ref_g_scale: float) -> SweepRow:
    for r in rows:
        if r.n_conn == ref_n_conn and math.isclose(r.g_scale, ref_g_scale, rel_tol=1e-12):
            return r
    raise CalibrationError(f"no sweep row at reference (nConn={ref_n_conn}, gScale={ref_g_scale})")


def select_optima(rows: Sequence[SweepRow], ref_n_conn: int, ref_g_scale: float) -> list[tuple[int, float]]:
    """Per ``n_conn``, the NaN-free ``g_scale`` whose rate best matches the reference.

    Rows with ``sum_nans != 0`` never qualify.  Exact ties go to the smaller
    ``g_scale``.  Each excluded NaN row raises a :class:`CalibrationWarning`,
    and so does an ``n_conn`` with no NaN-free row, which is skipped.
    """
    ref = _find_reference(rows, ref_n_conn, ref_g_scale)
    if ref.sum_nans != 0:
        raise CalibrationError(
            f"reference row (nConn={ref_n_conn}, gScale={ref_g_scale}) has {ref.sum_nans} NaN neurons")
    by_conn: dict[int, list[SweepRow]] = {}
    for r in rows:
        by_conn.setdefault(r.n_conn, []).append(r)
    optima = []
    for n_conn in sorted(by_conn):
        clean = [r for r in by_conn[n_conn] if r.sum_nans == 0 and math.isfinite(r.avg_spike)]
        for r in by_conn[n_conn]:
            if r.sum_nans != 0:
                warnings.warn(f"nConn={n_conn} gScale={r.g_scale}: {r.sum_nans} NaN neurons; cell excluded",
                              CalibrationWarning, stacklevel=2)
        if not clean:
            warnings.warn(f"nConn={n_conn}: every gScale produced NaNs; excluded from fit",
                          CalibrationWarning, stacklevel=2)
            continue
        best = min(clean, key=lambda r: (abs(r.avg_spike - ref.avg_spike), r.g_scale))
        optima.append((n_conn, best.g_scale))
    return optima


def write_optima(optima: Iterable[tuple[int, float]], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["nConn", "gScale"])
    for n, g in optima:
        w.writerow([n, repr(float(g))])


# -------------------------------------------------------------- pipeline


@dataclass
class Calibration:
    rows: list[SweepRow]
    failures: list[SweepFailure]
    optima: list[tuple[int, float]]
    fit: FitResult | None
    warnings: list[str]


def gscale_optimise(
    template: Template,
    n_conn_values: Sequence[int],
    g_scale_values: Sequence[float],
    target_population: str,
    ref_n_conn: int | None = None,
    ref_g_scale: float = 1.0,
    *,
    storage: str | None = None,
    workers: int = 1,
) -> Calibration:
    """Sweep, select optima and fit; the whole calibration in one call.

    The fit is skipped (``fit=None``) when fewer than four optima survive.
    """
    if ref_n_conn is None:
        ref_n_conn = max(n_conn_values)
    failures: list[SweepFailure] = []
    rows = sweep(template, n_conn_values, g_scale_values, target_population,
                 storage=storage, workers=workers, failures=failures)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CalibrationWarning)
        optima = select_optima(rows, ref_n_conn, ref_g_scale)
    msgs = [str(w.message) for w in caught if issubclass(w.category, CalibrationWarning)]
    fit = fit_gscale(optima) if len(optima) >= 4 else None
    return Calibration(rows, failures, optima, fit, msgs)


def count_inversions(optima: Sequence[tuple[int, float]]) -> int:
    """Number of adjacent pairs where ``g_scale`` increases with ``n_conn``."""
    gs = [g for _, g in sorted(optima)]
    return sum(1 for a, b in zip(gs, gs[1:]) if b > a)
