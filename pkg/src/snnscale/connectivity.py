"""Dense and compressed-row-storage (CRS) synapse matrices.

Rows are pre-synaptic neurons, columns post-synaptic neurons, and a zero
weight means "no synapse".  CRS matrices are kept in canonical form: within
each row the post-synaptic indices are strictly increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .model import Constant, Uniform, WeightDist


class StructureError(ValueError):
    """A CRS matrix violates its structural invariants."""


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    weights: np.ndarray  # (n_pre, n_post), row-major

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError(f"dense matrix needs positive 2-D shape, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("dense matrix entries must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_pre(self) -> int:
        return self.weights.shape[0]

    @property
    def n_post(self) -> int:
        return self.weights.shape[1]

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.weights))

    def __eq__(self, other):
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        return self.weights.dtype == other.weights.dtype and np.array_equal(self.weights, other.weights)

    def astype(self, dtype) -> DenseMatrix:
        return DenseMatrix(self.weights.astype(dtype))


@dataclass(frozen=True, eq=False)
class SparseCRS:
    """Three-array CRS: ``g_values``, ``post_ind`` and ``row_start``.

    Row ``i`` spans ``row_start[i]:row_start[i + 1]``; ``row_start`` has
    ``n_pre + 1`` entries.
    """

    n_pre: int
    n_post: int
    g_values: np.ndarray
    post_ind: np.ndarray
    row_start: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(self.g_values)
        ind = np.ascontiguousarray(self.post_ind, dtype=np.int64)
        start = np.ascontiguousarray(self.row_start, dtype=np.int64)
        _check_crs(self.n_pre, self.n_post, g, ind, start)
        for arr in (g, ind, start):
            arr.setflags(write=False)
        object.__setattr__(self, "g_values", g)
        object.__setattr__(self, "post_ind", ind)
        object.__setattr__(self, "row_start", start)

    @property
    def nnz(self) -> int:
        return len(self.g_values)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.row_start[i], self.row_start[i + 1]
        return self.post_ind[s:e], self.g_values[s:e]

    def __eq__(self, other):
        if not isinstance(other, SparseCRS):
            return NotImplemented
        return (
            (self.n_pre, self.n_post) == (other.n_pre, other.n_post)
            and self.g_values.dtype == other.g_values.dtype
            and np.array_equal(self.g_values, other.g_values)
            and np.array_equal(self.post_ind, other.post_ind)
            and np.array_equal(self.row_start, other.row_start)
        )

    def astype(self, dtype) -> SparseCRS:
        return SparseCRS(self.n_pre, self.n_post, self.g_values.astype(dtype), self.post_ind, self.row_start)


Matrix = Union[DenseMatrix, SparseCRS]


def _check_crs(n_pre, n_post, g, ind, start):
    if n_pre < 1 or n_post < 1:
        raise StructureError(f"dimensions must be positive, got {n_pre}x{n_post}")
    if g.ndim != 1 or ind.shape != g.shape:
        raise StructureError("g_values and post_ind must be 1-D arrays of equal length")
    if start.shape != (n_pre + 1,):
        raise StructureError(f"row_start must have length n_pre + 1 = {n_pre + 1}, got {start.shape}")
    if start[0] != 0:
        raise StructureError("row_start[0] must be 0")
    if np.any(np.diff(start) < 0):
        raise StructureError("row_start must be non-decreasing")
    if start[-1] != len(g):
        raise StructureError(f"row_start[-1]={start[-1]} does not match nnz={len(g)}")
    if len(ind) and (ind.min() < 0 or ind.max() >= n_post):
        raise StructureError("post_ind entries must lie in [0, n_post)")
    # strictly increasing within rows: every step that is not a row boundary must be positive
    if len(ind) > 1:
        steps = np.diff(ind)
        boundary = np.zeros(len(ind) - 1, dtype=bool)
        inner = start[1:-1]
        inner = inner[(inner > 0) & (inner < len(ind))]
        boundary[inner - 1] = True
        if np.any((steps <= 0) & ~boundary):
            raise StructureError("post_ind must be strictly increasing within each row")
    if not np.isfinite(g).all() or np.any(g == 0):
        raise StructureError("g_values must be finite and non-zero")


def _draw(dist: WeightDist, gen: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(dist, Constant):
        return np.full(n, float(dist.w))
    if isinstance(dist, Uniform):
        # 1 - U[0,1) lies in (0, 1], so lo itself is never drawn
        return dist.lo + (dist.hi - dist.lo) * (1.0 - gen.random(n))
    raise TypeError(f"unknown weight distribution {dist!r}")


def gen_fixed_outdegree(
    n_pre: int, n_post: int, k: int, dist: WeightDist, sign: float, seed: int | np.random.Generator
) -> DenseMatrix:
    """Random matrix where every row has exactly ``k`` non-zero weights.

    Targets are sampled uniformly without replacement; weights are drawn in
    row-major order of the sorted targets and multiplied by ``sign``.
    """
    if not 1 <= k <= n_post:
        raise ValueError(f"out-degree k={k} must lie in [1, n_post={n_post}]")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    gen = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if k == n_post:
        cols = np.broadcast_to(np.arange(n_post), (n_pre, n_post))
    else:
        cols = np.sort(np.argsort(gen.random((n_pre, n_post)), axis=1, kind="stable")[:, :k], axis=1)
    w = np.zeros((n_pre, n_post))
    rows = np.repeat(np.arange(n_pre), k)
    w[rows, cols.ravel()] = sign * _draw(dist, gen, n_pre * k)
    return DenseMatrix(w)


def to_sparse(d: DenseMatrix) -> SparseCRS:
    rows, cols = np.nonzero(d.weights)  # row-major, so canonical order
    row_start = np.zeros(d.n_pre + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=d.n_pre), out=row_start[1:])
    return SparseCRS(d.n_pre, d.n_post, d.weights[rows, cols], cols, row_start)


def to_dense(s: SparseCRS) -> DenseMatrix:
    w = np.zeros((s.n_pre, s.n_post), dtype=s.g_values.dtype)
    rows = np.repeat(np.arange(s.n_pre), np.diff(s.row_start))
    w[rows, s.post_ind] = s.g_values
    return DenseMatrix(w)


def mem_sparse(nnz: int, n_post: int) -> int:
    """Stored elements for CRS: ``2 * nnz + n_post``.

    The third array is counted as ``n_post`` elements, following the
    published cost formula, although :class:`SparseCRS` actually stores
    ``n_pre + 1`` row offsets.
    """
    if nnz < 0 or n_post < 0:
        raise ValueError("counts must be non-negative")
    return 2 * nnz + n_post


def mem_dense(n_pre: int, n_post: int) -> int:
    if n_pre < 0 or n_post < 0:
        raise ValueError("counts must be non-negative")
    return n_pre * n_post


def scale(m: Matrix, g_scale: float) -> Matrix:
    """Multiply every stored weight by ``g_scale``; structure is unchanged."""
    if not (math.isfinite(g_scale) and g_scale > 0):
        raise ValueError(f"g_scale must be finite and positive, got {g_scale}")
    if isinstance(m, DenseMatrix):
        w = m.weights * m.weights.dtype.type(g_scale)
        return DenseMatrix(w)
    g = m.g_values * m.g_values.dtype.type(g_scale)
    return SparseCRS(m.n_pre, m.n_post, g, m.post_ind, m.row_start)


# ------------------------------------------------------------------- JSON


def matrix_to_dict(m: Matrix) -> dict[str, Any]:
    if isinstance(m, DenseMatrix):
        return {"kind": "dense", "weights": m.weights.tolist()}
    return {
        "kind": "sparse", "nPre": m.n_pre, "nPost": m.n_post,
        "gValues": m.g_values.tolist(), "postInd": m.post_ind.tolist(), "rowStart": m.row_start.tolist(),
    }


def matrix_from_dict(doc: dict[str, Any]) -> Matrix:
    if doc["kind"] == "dense":
        return DenseMatrix(np.array(doc["weights"], dtype=float))
    return SparseCRS(doc["nPre"], doc["nPost"], np.array(doc["gValues"], dtype=float),
                     np.array(doc["postInd"], dtype=np.int64), np.array(doc["rowStart"], dtype=np.int64))
