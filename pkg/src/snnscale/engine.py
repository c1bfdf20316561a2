"""Clock-driven simulation of a :class:`~snnscale.model.NetworkSpec`.

Each step (1) advances the neuron dynamics, (2) records threshold crossings
and applies resets, and (3) propagates the new spikes into post-synaptic
accumulators that are consumed by the next step's update.

Propagation adds weights in a fixed order (ascending pre-synaptic index, then
ascending post-synaptic index) on both the dense and the sparse path, so the
two storage formats produce bit-identical accumulators and rasters.
Non-finite values are never clamped.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import IO, Iterator, Mapping

import numpy as np
from numba import njit

from . import rng
from .connectivity import DenseMatrix, Matrix, SparseCRS, gen_fixed_outdegree, scale, to_sparse
from .model import (
    CONDLIF, DENSE, INHIBITORY, IZHIKEVICH, POISSON, SPARSE,
    NetworkSpec, SynapseGroupSpec, validate,
)

IZH_PEAK = 30.0  # mV, spike cut-off of the Izhikevich model


class SpecError(ValueError):
    """The network spec failed validation."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


# ------------------------------------------------------------ propagation


@njit(cache=True)
def _propagate_sparse(row_start, post_ind, g_values, spikes, acc):
    for i in spikes:
        for k in range(row_start[i], row_start[i + 1]):
            acc[post_ind[k]] += g_values[k]


@njit(cache=True)
def _propagate_dense(weights, spikes, acc):
    n_post = weights.shape[1]
    for i in spikes:
        for j in range(n_post):
            w = weights[i, j]
            if w != 0:
                acc[j] += w


def propagate(matrix: Matrix, spikes: np.ndarray, accumulator: np.ndarray) -> np.ndarray:
    """Add the weights of every spiking row into ``accumulator`` in place.

    ``spikes`` are row indices of ``matrix``; they are processed in ascending
    order and each row's targets in ascending column order, skipping zeros.
    """
    spikes = np.unique(np.asarray(spikes, dtype=np.int64))
    if accumulator.shape != (matrix.n_post,):
        raise IndexError(f"accumulator has shape {accumulator.shape}, expected ({matrix.n_post},)")
    if len(spikes) == 0:
        return accumulator
    if spikes[0] < 0 or spikes[-1] >= matrix.n_pre:
        raise IndexError(f"spike index out of range [0, {matrix.n_pre})")
    if isinstance(matrix, SparseCRS):
        values = matrix.g_values.astype(accumulator.dtype, copy=False)
        _propagate_sparse(matrix.row_start, matrix.post_ind, values, spikes, accumulator)
    else:
        _propagate_dense(matrix.weights.astype(accumulator.dtype, copy=False), spikes, accumulator)
    return accumulator


def build_matrix(spec: NetworkSpec, syn: SynapseGroupSpec, storage: str, dtype=np.float32) -> Matrix | None:
    """Connectivity for ``syn`` scaled by its gScale, or None when gScale is 0.

    Targets and base weights come from the group's own random stream, so
    changing ``g_scale`` never changes which synapses exist.
    """
    gen = rng.stream(spec.global_seed, syn.name, "connectivity")
    n_post = spec.population(syn.post).size
    base = gen_fixed_outdegree(spec.pre_size(syn), n_post, syn.out_degree, syn.weights, syn.sign_factor, gen)
    if syn.g_scale == 0:
        return None
    m = scale(base, syn.g_scale).astype(dtype)
    return to_sparse(m) if storage == SPARSE else m


# ------------------------------------------------------------------ state


@dataclass
class PopState:
    name: str
    model: str
    size: int
    vars: dict[str, np.ndarray]
    params: dict[str, object]
    gen: np.random.Generator
    nan_flag: np.ndarray
    acc_exc: np.ndarray
    acc_inh: np.ndarray


@dataclass
class SimState:
    pops: list[PopState]
    step_index: int = 0

    def pop(self, name: str) -> PopState:
        for p in self.pops:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def sum_nans(self) -> int:
        return int(sum(p.nan_flag.sum() for p in self.pops))


def init_state(spec: NetworkSpec, dtype=np.float32) -> SimState:
    pops = []
    for pop in spec.populations:
        n = pop.size
        p = pop.params
        if pop.model == IZHIKEVICH:
            params = {k: np.asarray(v, dtype=dtype) for k, v in p.arrays().items()}
            v = np.full(n, -65.0, dtype=dtype)
            state = {"v": v, "u": params["b"] * v}
        elif pop.model == CONDLIF:
            params = {k: dtype(x) for k, x in vars(p).items()}
            params["decay"] = dtype(math.exp(-spec.dt / p.tau_syn))
            state = {
                "v": np.full(n, p.e_leak, dtype=dtype),
                "g_exc": np.zeros(n, dtype=dtype),
                "g_inh": np.zeros(n, dtype=dtype),
            }
        else:
            params = {"p_spike": p.rate * spec.dt / 1000.0}
            state = {}
        pops.append(PopState(
            pop.name, pop.model, n, state, params, np.random.default_rng(pop.seed),
            np.zeros(n, dtype=bool), np.zeros(n, dtype=dtype), np.zeros(n, dtype=dtype),
        ))
    return SimState(pops)


def detect_nans(state: SimState) -> int:
    """Flag neurons holding any non-finite state value; return how many are new.

    Flags never clear, and flagged neurons keep being simulated.
    """
    new = 0
    for p in state.pops:
        if not p.vars:
            continue
        bad = np.zeros(p.size, dtype=bool)
        for arr in p.vars.values():
            bad |= ~np.isfinite(arr)
        fresh = bad & ~p.nan_flag
        new += int(fresh.sum())
        p.nan_flag |= bad
    return new


def _advance(p: PopState, dt) -> np.ndarray:
    """Update one population by one step and return the indices that spiked."""
    if p.model == IZHIKEVICH:
        par, v, u = p.params, p.vars["v"], p.vars["u"]
        current = par["i_ext"] + par["noise_amplitude"] * p.gen.standard_normal(p.size, dtype=v.dtype)
        current += p.acc_exc
        p.acc_exc[:] = 0
        # two half-steps for v, one full step for u; dt scales the half-steps
        half = v.dtype.type(0.5 * dt)
        for _ in range(2):
            v += half * (0.04 * v * v + 5.0 * v + 140.0 - u + current)
        u += v.dtype.type(dt) * par["a"] * (par["b"] * v - u)
        fired = np.flatnonzero(v >= IZH_PEAK)
        v[fired] = par["c"][fired]
        u[fired] += par["d"][fired]
        return fired
    if p.model == CONDLIF:
        par, v = p.params, p.vars["v"]
        g_exc, g_inh = p.vars["g_exc"], p.vars["g_inh"]
        g_exc *= par["decay"]
        g_exc += p.acc_exc
        g_inh *= par["decay"]
        g_inh -= p.acc_inh  # inhibitory weights are stored negative
        p.acc_exc[:] = 0
        p.acc_inh[:] = 0
        v += v.dtype.type(dt) * (
            (par["e_leak"] - v) / par["tau_m"] + g_exc * (par["e_exc"] - v) + g_inh * (par["e_inh"] - v))
        fired = np.flatnonzero(v >= par["v_thresh"])
        v[fired] = par["v_reset"]
        return fired
    return np.flatnonzero(p.gen.random(p.size) < p.params["p_spike"])


# ----------------------------------------------------------------- results


@dataclass(eq=False)
class Raster:
    """Spike events as parallel arrays, ordered by step, population, neuron."""

    populations: tuple[str, ...]
    sizes: dict[str, int]
    step: np.ndarray
    pop: np.ndarray
    neuron: np.ndarray

    def __len__(self):
        return len(self.step)

    def __iter__(self) -> Iterator[tuple[int, str, int]]:
        for s, p, n in zip(self.step.tolist(), self.pop.tolist(), self.neuron.tolist()):
            yield s, self.populations[p], n

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return (self.populations == other.populations
                and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("step", "pop", "neuron")))

    def count(self, population: str) -> int:
        if population not in self.sizes:
            raise KeyError(f"unknown population {population!r}")
        return int(np.count_nonzero(self.pop == self.populations.index(population)))

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "population", "neuron"])
        w.writerows(self)


def avg_spike(raster: Raster, population: str, duration_ms: float) -> float:
    """Mean spikes per neuron per second of ``population``."""
    if not duration_ms > 0:
        raise ValueError("duration_ms must be positive")
    return raster.count(population) / (raster.sizes[population] * (duration_ms / 1000.0))


@dataclass
class RunResult:
    raster: Raster
    avg_spike: dict[str, float]
    sum_nans: int
    n_steps: int
    wall_time_ms: float = field(default=0.0, compare=False)
    nan_history: np.ndarray | None = field(default=None, repr=False, compare=False)

    def summary(self) -> dict:
        return {
            "avgSpike": self.avg_spike,
            "sumNaNs": self.sum_nans,
            "steps": self.n_steps,
            "spikes": len(self.raster),
            "timing": {"wallTimeMs": self.wall_time_ms},
        }

    def write_summary(self, fh: IO[str]) -> None:
        json.dump(self.summary(), fh, indent=1, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------- run


def run(
    spec: NetworkSpec,
    storage: str | None = None,
    dtype=np.float32,
    state: SimState | None = None,
    record_nan_history: bool = False,
) -> RunResult:
    """Simulate ``spec`` for ``ceil(duration_ms / dt)`` steps.

    ``storage`` overrides every synapse group's own storage choice.  A
    pre-built ``state`` (from :func:`init_state`) may be passed to start from
    a perturbed initial condition.
    """
    violations = validate(spec)
    if violations:
        raise SpecError(violations)
    if storage not in (None, DENSE, SPARSE):
        raise ValueError(f"storage must be {DENSE!r} or {SPARSE!r}")
    t0 = time.perf_counter()
    dtype = np.dtype(dtype).type
    if state is None:
        state = init_state(spec, dtype)

    index = {p.name: i for i, p in enumerate(spec.populations)}
    wiring = []
    for syn in spec.synapses:
        m = build_matrix(spec, syn, storage or syn.storage, dtype)
        if m is None:
            continue
        post = state.pops[index[syn.post]]
        target = post.acc_inh if syn.sign == INHIBITORY and post.model == CONDLIF else post.acc_exc
        lo, hi = syn.pre_range or (0, spec.population(syn.pre).size)
        wiring.append((index[syn.pre], lo, hi, m, target))

    steps, pops, neurons = [], [], []
    nan_hist = []
    n_steps = spec.n_steps
    with np.errstate(all="ignore"):
        for step in range(n_steps):
            fired = [_advance(p, spec.dt) for p in state.pops]
            detect_nans(state)
            state.step_index += 1
            for i, f in enumerate(fired):
                if len(f):
                    steps.append(np.full(len(f), step, dtype=np.int64))
                    pops.append(np.full(len(f), i, dtype=np.int64))
                    neurons.append(f)
            for pre, lo, hi, m, target in wiring:
                f = fired[pre]
                if len(f):
                    local = f[(f >= lo) & (f < hi)] - lo
                    propagate(m, local, target)
            if record_nan_history:
                nan_hist.append(state.sum_nans)

    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    raster = Raster(
        tuple(p.name for p in spec.populations),
        {p.name: p.size for p in spec.populations},
        cat(steps), cat(pops), cat(neurons),
    )
    avg = {p.name: avg_spike(raster, p.name, spec.duration_ms) for p in spec.populations}
    return RunResult(
        raster, avg, state.sum_nans, n_steps,
        wall_time_ms=(time.perf_counter() - t0) * 1000.0,
        nan_history=np.array(nan_hist) if record_nan_history else None,
    )


def results_equal(a: RunResult, b: RunResult) -> bool:
    """Equality ignoring wall time."""
    return a.raster == b.raster and a.avg_spike == b.avg_spike and a.sum_nans == b.sum_nans


def counts_by_population(result: RunResult) -> Mapping[str, int]:
    return {name: result.raster.count(name) for name in result.raster.populations}
