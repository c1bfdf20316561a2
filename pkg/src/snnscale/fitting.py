"""Least-squares fit of the hyperbolic scaling law ``g = k1 / (k2 + n) + k3``.

The model is nonlinear in ``k2``, so it is fitted with a damped Gauss-Newton
(Levenberg-Marquardt) iteration from several starting points.  Iterates that
would put the pole ``n = -k2`` within ``POLE_EPS * max|n|`` of any fitted
``n`` are rejected.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

POLE_EPS = 1e-3


@dataclass(frozen=True)
class FitResult:
    k1: float
    k2: float
    k3: float
    sse: float
    mape_percent: float
    converged: bool
    iterations: int

    def to_json(self) -> dict:
        d = asdict(self)
        d["mapePercent"] = d.pop("mape_percent")
        return d


def model(k1: float, k2: float, k3: float, x):
    return k1 / (k2 + np.asarray(x, dtype=float)) + k3


def predict(fit: FitResult, n_conn: float) -> float:
    denom = fit.k2 + n_conn
    if denom == 0:
        raise ZeroDivisionError(f"n_conn={n_conn} sits on the pole k2 + n = 0")
    return fit.k1 / denom + fit.k3


def mape(fit: FitResult, points: Sequence[tuple[float, float]]) -> float:
    """Mean absolute percentage error of ``fit`` over ``(x, y)`` points."""
    errs = []
    for x, y in points:
        if y == 0:
            raise ValueError(f"MAPE undefined: point (x={x}, y=0) has zero target")
        errs.append(abs(y - predict(fit, x)) / abs(y))
    if not errs:
        raise ValueError("MAPE needs at least one point")
    return 100.0 * sum(errs) / len(errs)


def _mape_or_nan(k, x, y) -> float:
    if np.any(y == 0):
        return math.nan
    return float(100.0 * np.mean(np.abs(y - model(*k, x)) / np.abs(y)))


def _pole_ok(k2: float, x: np.ndarray, span: float) -> bool:
    return bool(np.all(np.abs(k2 + x) >= POLE_EPS * span))


def _lm(p, x, y, span, max_iter, ftol, xtol):
    """Single Levenberg-Marquardt descent.  Returns (params, sse, converged, iterations)."""
    p = np.array(p, dtype=float)

    def residual(q):
        return y - model(*q, x)

    r = residual(p)
    sse = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        den = p[1] + x
        jac = np.column_stack([1.0 / den, -p[0] / den**2, np.ones_like(x)])
        jtj = jac.T @ jac
        grad = jac.T @ r
        if np.max(np.abs(grad)) <= 1e-14 * max(1.0, sse):
            return p, sse, True, it
        improved = False
        while lam < 1e20:
            a = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-30))
            try:
                step = np.linalg.solve(a, grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + step
            if not (np.all(np.isfinite(trial)) and _pole_ok(trial[1], x, span)):
                lam *= 10.0
                continue
            r_new = residual(trial)
            sse_new = float(r_new @ r_new)
            if sse_new < sse:
                small_step = np.all(np.abs(step) <= xtol * (np.abs(p) + xtol))
                small_gain = sse - sse_new <= ftol * sse
                p, r, sse = trial, r_new, sse_new
                lam = max(lam / 10.0, 1e-12)
                improved = True
                if small_step or small_gain:
                    return p, sse, True, it
                break
            lam *= 10.0
        if not improved:
            # no downhill step at any damping: a minimum to working precision
            return p, sse, True, it
    return p, sse, False, max_iter


def fit_gscale(
    points: Sequence[tuple[float, float]],
    *,
    max_iter: int = 1000,
    ftol: float = 1e-15,
    xtol: float = 1e-12,
) -> FitResult:
    """Fit ``k1 / (k2 + x) + k3`` to ``(x, y)`` points.

    Starts: ``k3 = min(y)``, ``k2`` in ``{-min(x)/2, 0, mean(x), 10*max(x)}``
    and ``k1`` through the first (smallest-x) point.  Starts on or near a
    pole are skipped.  The lowest-SSE result wins; ``converged`` is False
    only if no start reached a tolerance.

    Constant data returns ``k1 = 0, k3 = y`` and ``k2 = 1 - min(x)``, which
    keeps every fitted ``x`` one unit right of the pole.
    """
    pts = sorted((float(a), float(b)) for a, b in points)
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points for a 3-parameter fit, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if len(np.unique(x)) != len(x):
        raise ValueError("x values must be distinct")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("points must be finite")
    span = float(np.max(np.abs(x))) or 1.0

    if np.all(y == y[0]):
        k = (0.0, 1.0 - float(x.min()), float(y[0]))
        return FitResult(*k, 0.0, _mape_or_nan(k, x, y), True, 0)

    k3 = float(y.min())
    best = None
    for k2 in (-x.min() / 2.0, 0.0, x.mean(), 10.0 * x.max()):
        k2 = float(k2)
        if not _pole_ok(k2, x, span):
            continue
        k1 = (y[0] - k3) * (x[0] + k2)
        if k1 == 0:
            k1 = (y[-1] - k3) * (x[-1] + k2) or 1.0
        p, sse, ok, its = _lm((k1, k2, k3), x, y, span, max_iter, ftol, xtol)
        cand = (not ok, sse, p, its)
        if best is None or (cand[0], cand[1]) < (best[0], best[1]):
            best = cand
    if best is None:
        raise ValueError("every starting point lies on a pole of the model")
    failed, sse, p, its = best
    k = (float(p[0]), float(p[1]), float(p[2]))
    return FitResult(*k, float(sse), _mape_or_nan(k, x, y), not failed, its)
