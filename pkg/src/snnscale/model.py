"""Declarative network descriptions and the two benchmark network builders.

A :class:`NetworkSpec` is plain immutable data: per-neuron parameter arrays are
stored as tuples of floats so that specs hash, compare and serialize exactly.
The engine converts them to arrays of the working precision at run start.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence, Union

from . import rng

IZHIKEVICH = "Izhikevich"
POISSON = "PoissonSource"
CONDLIF = "CondLIF"
MODELS = (IZHIKEVICH, POISSON, CONDLIF)

EXCITATORY = "excitatory"
INHIBITORY = "inhibitory"
DENSE = "dense"
SPARSE = "sparse"

MBODY_GROUPS = ("PN-KC", "PN-LHI", "LHI-KC", "KC-DN")


@dataclass(frozen=True)
class IzhikevichParams:
    """Per-neuron Izhikevich parameters.

    ``noise_amplitude`` scales a standard-normal input drawn every step;
    ``i_ext`` is a constant bias current.  Both are in the model's mV/ms
    current units.
    """

    a: tuple[float, ...]
    b: tuple[float, ...]
    c: tuple[float, ...]
    d: tuple[float, ...]
    noise_amplitude: tuple[float, ...]
    i_ext: tuple[float, ...]

    def arrays(self) -> dict[str, tuple[float, ...]]:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "d": self.d,
            "noise_amplitude": self.noise_amplitude,
            "i_ext": self.i_ext,
        }


@dataclass(frozen=True)
class PoissonParams:
    rate: float  # Hz


@dataclass(frozen=True)
class CondLIFParams:
    tau_m: float  # ms
    e_leak: float  # mV
    v_thresh: float
    v_reset: float
    e_exc: float
    e_inh: float
    tau_syn: float  # ms


Params = Union[IzhikevichParams, PoissonParams, CondLIFParams]
_PARAM_TYPES = {IZHIKEVICH: IzhikevichParams, POISSON: PoissonParams, CONDLIF: CondLIFParams}


@dataclass(frozen=True)
class NeuronPopulation:
    name: str
    size: int
    model: str
    params: Params
    seed: int


@dataclass(frozen=True)
class Uniform:
    """Uniform on ``(lo, hi]``; open at ``lo`` so a zero weight is never drawn from ``lo=0``."""

    lo: float
    hi: float


@dataclass(frozen=True)
class Constant:
    w: float


WeightDist = Union[Uniform, Constant]


@dataclass(frozen=True)
class SynapseGroupSpec:
    """A fixed-out-degree projection between two populations.

    ``pre_range`` optionally restricts the pre-synaptic side to the half-open
    index slice ``[start, stop)`` of the pre population.  The Izhikevich
    network uses it to express its excitatory and inhibitory sub-populations
    inside one population.
    """

    name: str
    pre: str
    post: str
    sign: str
    out_degree: int
    weights: WeightDist
    g_scale: float
    storage: str = SPARSE
    pre_range: tuple[int, int] | None = None

    @property
    def sign_factor(self) -> float:
        return 1.0 if self.sign == EXCITATORY else -1.0


@dataclass(frozen=True)
class NetworkSpec:
    populations: tuple[NeuronPopulation, ...]
    synapses: tuple[SynapseGroupSpec, ...]
    dt: float = 1.0  # ms
    duration_ms: float = 1000.0
    global_seed: int = 0

    def population(self, name: str) -> NeuronPopulation:
        for pop in self.populations:
            if pop.name == name:
                return pop
        raise KeyError(f"unknown population {name!r}")

    def synapse(self, name: str) -> SynapseGroupSpec:
        for syn in self.synapses:
            if syn.name == name:
                return syn
        raise KeyError(f"unknown synapse group {name!r}")

    def pre_size(self, syn: SynapseGroupSpec) -> int:
        if syn.pre_range is not None:
            return syn.pre_range[1] - syn.pre_range[0]
        return self.population(syn.pre).size

    def with_g_scale(self, group: str, g_scale: float) -> NetworkSpec:
        synapses = tuple(replace(s, g_scale=g_scale) if s.name == group else s for s in self.synapses)
        return replace(self, synapses=synapses)

    @property
    def n_steps(self) -> int:
        return math.ceil(self.duration_ms / self.dt)

    @property
    def n_neurons(self) -> int:
        return sum(p.size for p in self.populations)


# ---------------------------------------------------------------- builders


def build_izhikevich_net(
    n_neurons: int = 1000,
    n_conn: int = 1000,
    exc_fraction: float = 0.8,
    g_scale: float = 1.0,
    seed: int = 0,
    *,
    dt: float = 1.0,
    duration_ms: float = 1000.0,
    storage: str = SPARSE,
) -> NetworkSpec:
    """Pulse-coupled cortical network of excitatory and inhibitory Izhikevich cells.

    Per-neuron parameters follow the classic randomized recipe, with ``r``
    uniform on ``[0, 1)`` per neuron:

    - excitatory: a=0.02, b=0.2, c=-65+15r^2, d=8-6r^2, noise 5, weights U(0, 0.5]
    - inhibitory: a=0.02+0.08r, b=0.25-0.05r, c=-65, d=2, noise 2, weights -U(0, 1]

    Both sub-populations project onto the whole network with out-degree
    ``n_conn``; ``g_scale`` multiplies every weight.
    """
    if not 0 < exc_fraction < 1:
        raise ValueError(f"exc_fraction must lie in (0, 1), got {exc_fraction}")
    if n_neurons < 1:
        raise ValueError(f"n_neurons must be >= 1, got {n_neurons}")
    if not 1 <= n_conn <= n_neurons:
        raise ValueError(f"n_conn={n_conn} must lie in [1, n_neurons={n_neurons}]")

    n_exc = math.floor(exc_fraction * n_neurons)
    n_inh = n_neurons - n_exc
    name = "cortex"
    gen = rng.stream(seed, name, "params")
    r_exc = gen.random(n_exc)
    r_inh = gen.random(n_inh)

    a = [0.02] * n_exc + [0.02 + 0.08 * r for r in r_inh]
    b = [0.2] * n_exc + [0.25 - 0.05 * r for r in r_inh]
    c = [-65.0 + 15.0 * r * r for r in r_exc] + [-65.0] * n_inh
    d = [8.0 - 6.0 * r * r for r in r_exc] + [2.0] * n_inh
    noise = [5.0] * n_exc + [2.0] * n_inh
    params = IzhikevichParams(
        a=_floats(a), b=_floats(b), c=_floats(c), d=_floats(d),
        noise_amplitude=_floats(noise), i_ext=(0.0,) * n_neurons,
    )
    pop = NeuronPopulation(name, n_neurons, IZHIKEVICH, params, rng.derive_seed(seed, name))

    synapses = []
    if n_exc:
        synapses.append(SynapseGroupSpec(
            "exc", name, name, EXCITATORY, n_conn, Uniform(0.0, 0.5), g_scale, storage, (0, n_exc)))
    if n_inh:
        synapses.append(SynapseGroupSpec(
            "inh", name, name, INHIBITORY, n_conn, Uniform(0.0, 1.0), g_scale, storage, (n_exc, n_neurons)))
    return NetworkSpec((pop,), tuple(synapses), dt, duration_ms, seed)


DEFAULT_LIF = CondLIFParams(
    tau_m=20.0, e_leak=-60.0, v_thresh=-50.0, v_reset=-60.0, e_exc=0.0, e_inh=-80.0, tau_syn=5.0)


def build_mbody_net(
    n_pn: int,
    n_lhi: int,
    n_kc: int,
    n_dn: int,
    g_scales: Mapping[str, float],
    seed: int = 0,
    *,
    pn_rate: float = 20.0,
    pn_kc_fraction: float = 0.5,
    kc_dn_fraction: float = 0.5,
    lif: CondLIFParams = DEFAULT_LIF,
    dt: float = 0.5,
    duration_ms: float = 500.0,
    storage: str = SPARSE,
) -> NetworkSpec:
    """Feed-forward mushroom-body circuit: PN -> (KC, LHI), LHI -| KC, KC -> DN.

    Projection neurons are Poisson sources at ``pn_rate``; the other three
    populations are conductance-based LIF cells.  PN->LHI and LHI->KC are
    all-to-all; PN->KC and KC->DN target ``round(fraction * n_post)``
    (at least one) randomly chosen cells per pre-synaptic neuron.

    ``g_scales`` must contain an entry for each of ``MBODY_GROUPS``.
    """
    for label, n in (("n_pn", n_pn), ("n_lhi", n_lhi), ("n_kc", n_kc), ("n_dn", n_dn)):
        if n < 1:
            raise ValueError(f"{label} must be >= 1, got {n}")
    missing = [g for g in MBODY_GROUPS if g not in g_scales]
    if missing:
        raise ValueError(f"missing g_scale for synapse group(s): {', '.join(missing)}")

    def pop(name, size, model, params):
        return NeuronPopulation(name, size, model, params, rng.derive_seed(seed, name))

    pops = (
        pop("PN", n_pn, POISSON, PoissonParams(pn_rate)),
        pop("LHI", n_lhi, CONDLIF, lif),
        pop("KC", n_kc, CONDLIF, lif),
        pop("DN", n_dn, CONDLIF, lif),
    )

    def degree(fraction, n_post):
        return max(1, min(n_post, round(fraction * n_post)))

    syns = (
        SynapseGroupSpec("PN-KC", "PN", "KC", EXCITATORY, degree(pn_kc_fraction, n_kc),
                         Uniform(0.0, 0.0008), g_scales["PN-KC"], SPARSE),
        SynapseGroupSpec("PN-LHI", "PN", "LHI", EXCITATORY, n_lhi,
                         Uniform(0.0, 0.0003), g_scales["PN-LHI"], storage),
        SynapseGroupSpec("LHI-KC", "LHI", "KC", INHIBITORY, n_kc,
                         Uniform(0.0, 0.002), g_scales["LHI-KC"], storage),
        SynapseGroupSpec("KC-DN", "KC", "DN", EXCITATORY, degree(kc_dn_fraction, n_dn),
                         Uniform(0.0, 0.002), g_scales["KC-DN"], storage),
    )
    return NetworkSpec(pops, syns, dt, duration_ms, seed)


def _floats(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


# -------------------------------------------------------------- validation


def validate(spec: NetworkSpec) -> list[str]:
    """Return every invariant violation in ``spec``; empty means valid."""
    out: list[str] = []
    if not (isinstance(spec.dt, (int, float)) and math.isfinite(spec.dt) and spec.dt > 0):
        out.append("dt must be positive")
    if not (math.isfinite(spec.duration_ms) and spec.duration_ms > 0):
        out.append("duration_ms must be positive")
    if not 0 <= spec.global_seed <= rng.SEED_MAX:
        out.append("global_seed must be a 64-bit unsigned integer")

    sizes: dict[str, int] = {}
    for pop in spec.populations:
        if pop.name in sizes:
            out.append(f"population name {pop.name!r} is not unique")
        sizes[pop.name] = pop.size
        out.extend(_population_violations(pop, spec.dt))

    names = set()
    for syn in spec.synapses:
        where = f"synapse {syn.name!r}"
        if syn.name in names:
            out.append(f"{where}: name is not unique")
        names.add(syn.name)
        for end in ("pre", "post"):
            ref = getattr(syn, end)
            if ref not in sizes:
                out.append(f"{where}: {end} references unknown population {ref!r}")
        if syn.sign not in (EXCITATORY, INHIBITORY):
            out.append(f"{where}: sign must be {EXCITATORY!r} or {INHIBITORY!r}")
        if syn.storage not in (DENSE, SPARSE):
            out.append(f"{where}: storage must be {DENSE!r} or {SPARSE!r}")
        if not (math.isfinite(syn.g_scale) and syn.g_scale >= 0):
            out.append(f"{where}: g_scale must be finite and non-negative")
        out.extend(f"{where}: {v}" for v in _weight_violations(syn.weights))
        if syn.pre in sizes and syn.pre_range is not None:
            lo, hi = syn.pre_range
            if not 0 <= lo < hi <= sizes[syn.pre]:
                out.append(f"{where}: pre_range {syn.pre_range} outside population {syn.pre!r}")
        if syn.post in sizes and not 1 <= syn.out_degree <= sizes[syn.post]:
            out.append(f"{where}: out_degree {syn.out_degree} outside [1, {sizes[syn.post]}]")
    return out


def _population_violations(pop: NeuronPopulation, dt: float) -> list[str]:
    where = f"population {pop.name!r}"
    out = []
    if pop.size < 1:
        out.append(f"{where}: size must be >= 1")
    if not 0 <= pop.seed <= rng.SEED_MAX:
        out.append(f"{where}: seed must be a 64-bit unsigned integer")
    if pop.model not in MODELS:
        return out + [f"{where}: unknown model {pop.model!r}"]
    if not isinstance(pop.params, _PARAM_TYPES[pop.model]):
        return out + [f"{where}: params do not match model {pop.model!r}"]
    p = pop.params
    if isinstance(p, IzhikevichParams):
        for key, arr in p.arrays().items():
            if len(arr) != pop.size:
                out.append(f"{where}: params.{key} has length {len(arr)}, expected {pop.size}")
            elif not all(math.isfinite(x) for x in arr):
                out.append(f"{where}: params.{key} must be finite")
        if any(x <= 0 for x in p.a):
            out.append(f"{where}: params.a must be positive")
    elif isinstance(p, PoissonParams):
        if not (math.isfinite(p.rate) and p.rate >= 0):
            out.append(f"{where}: params.rate must be non-negative")
        elif dt > 0 and p.rate * dt / 1000.0 > 1:
            out.append(f"{where}: params.rate * dt exceeds 1 per step")
    else:
        if not p.tau_m > 0:
            out.append(f"{where}: params.tau_m must be positive")
        if not p.tau_syn > 0:
            out.append(f"{where}: params.tau_syn must be positive")
        if not p.v_reset < p.v_thresh:
            out.append(f"{where}: params.v_reset must be below v_thresh")
        if not p.e_inh < p.v_thresh < p.e_exc:
            out.append(f"{where}: params.v_thresh must lie between e_inh and e_exc")
    return out


def _weight_violations(dist: WeightDist) -> list[str]:
    if isinstance(dist, Uniform):
        if not (math.isfinite(dist.lo) and math.isfinite(dist.hi) and 0 <= dist.lo < dist.hi):
            return ["weights: uniform bounds must satisfy 0 <= lo < hi"]
    elif isinstance(dist, Constant):
        if not (math.isfinite(dist.w) and dist.w > 0):
            return ["weights: constant weight must be positive"]
    else:
        return ["weights: unknown distribution"]
    return []


# ----------------------------------------------------------- serialization


def to_dict(spec: NetworkSpec) -> dict[str, Any]:
    def pop_dict(p: NeuronPopulation):
        if isinstance(p.params, IzhikevichParams):
            params = {k: list(v) for k, v in p.params.arrays().items()}
        else:
            params = dict(vars(p.params))
        return {"name": p.name, "size": p.size, "model": p.model, "params": params, "seed": p.seed}

    def syn_dict(s: SynapseGroupSpec):
        if isinstance(s.weights, Uniform):
            weights = {"kind": "uniform", "lo": s.weights.lo, "hi": s.weights.hi}
        else:
            weights = {"kind": "constant", "w": s.weights.w}
        return {
            "name": s.name, "pre": s.pre, "post": s.post, "sign": s.sign,
            "outDegree": s.out_degree, "weights": weights, "gScale": s.g_scale,
            "storage": s.storage, "preRange": list(s.pre_range) if s.pre_range else None,
        }

    return {
        "populations": [pop_dict(p) for p in spec.populations],
        "synapses": [syn_dict(s) for s in spec.synapses],
        "dt": spec.dt,
        "durationMs": spec.duration_ms,
        "globalSeed": spec.global_seed,
    }


def from_dict(doc: Mapping[str, Any]) -> NetworkSpec:
    pops = []
    for p in doc["populations"]:
        model = p["model"]
        if model not in _PARAM_TYPES:
            raise ValueError(f"unknown neuron model {model!r}")
        raw = p["params"]
        if model == IZHIKEVICH:
            params = IzhikevichParams(**{k: _floats(v) for k, v in raw.items()})
        else:
            params = _PARAM_TYPES[model](**{k: float(v) for k, v in raw.items()})
        pops.append(NeuronPopulation(p["name"], int(p["size"]), model, params, int(p["seed"])))
    syns = []
    for s in doc["synapses"]:
        w = s["weights"]
        if w["kind"] == "uniform":
            weights: WeightDist = Uniform(float(w["lo"]), float(w["hi"]))
        elif w["kind"] == "constant":
            weights = Constant(float(w["w"]))
        else:
            raise ValueError(f"unknown weight distribution {w['kind']!r}")
        pre_range = s.get("preRange")
        syns.append(SynapseGroupSpec(
            s["name"], s["pre"], s["post"], s["sign"], int(s["outDegree"]), weights,
            float(s["gScale"]), s.get("storage", SPARSE),
            tuple(pre_range) if pre_range is not None else None,
        ))
    return NetworkSpec(tuple(pops), tuple(syns), float(doc["dt"]), float(doc["durationMs"]),
                       int(doc["globalSeed"]))


def dumps(spec: NetworkSpec) -> str:
    return json.dumps(to_dict(spec), sort_keys=True, indent=1)


def loads(text: str) -> NetworkSpec:
    return from_dict(json.loads(text))


def reseed(spec: NetworkSpec, seed: int) -> NetworkSpec:
    """Replace the global seed and re-derive every population's runtime seed.

    Parameter arrays already stored in the network spec are kept as they are.
    """
    pops = tuple(replace(p, seed=rng.derive_seed(seed, p.name)) for p in spec.populations)
    return replace(spec, populations=pops, global_seed=seed)
