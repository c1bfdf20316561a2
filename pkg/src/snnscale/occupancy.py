"""Analytic GPU occupancy model and block-size recommendation.

Resident blocks per SM are bounded by four limits: resident warps, resident
blocks, shared memory and registers.  Registers are allocated per warp and
rounded up to ``reg_alloc_unit``; shared memory is allocated per block and
rounded up to ``shared_alloc_unit``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

LIMITERS = ("warps", "blocks", "shared", "registers")
UNBOUNDED = math.inf


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    max_warps_per_sm: int
    max_blocks_per_sm: int
    max_threads_per_block: int
    shared_mem_per_sm: int  # bytes
    regs_per_sm: int
    reg_alloc_unit: int = 256  # registers, per warp
    shared_alloc_unit: int = 256  # bytes, per block
    warp_size: int = 32

    def __post_init__(self):
        for f in fields(self):
            if f.name != "name" and getattr(self, f.name) < 1:
                raise ValueError(f"device {self.name!r}: {f.name} must be positive")
        if self.max_warps_per_sm * self.warp_size < self.max_threads_per_block:
            raise ValueError(f"device {self.name!r}: a full block would not fit the warp slots")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> DeviceSpec:
        """Build from a JSON object; keys may be snake_case or camelCase."""
        known = {f.name for f in fields(cls)}
        doc = {_snake(k): v for k, v in doc.items()}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown device fields: {', '.join(sorted(unknown))}")
        return cls(**doc)


@dataclass(frozen=True)
class KernelSpec:
    threads_per_block: int
    regs_per_thread: int = 0
    shared_mem_per_block: int = 0  # bytes


@dataclass(frozen=True)
class OccupancyResult:
    warps_per_block: int
    limits: dict[str, float]  # blocks allowed by each constraint; inf when unconstrained
    active_blocks: int
    active_warps: int
    occupancy: float
    limiters: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "warpsPerBlock": self.warps_per_block,
            "limits": {k: (None if math.isinf(v) else int(v)) for k, v in self.limits.items()},
            "activeBlocks": self.active_blocks,
            "activeWarps": self.active_warps,
            "occupancy": self.occupancy,
            "limiters": list(self.limiters),
        }


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(w.title() for w in rest)


def _snake(name: str) -> str:
    return "".join("_" + c.lower() if c.isupper() else c for c in name)


# compute capability 3.0 (Kepler GK10x), from the vendor's architecture tables
PRESETS: dict[str, DeviceSpec] = {
    "cc30": DeviceSpec(
        name="cc30", max_warps_per_sm=64, max_blocks_per_sm=16, max_threads_per_block=1024,
        shared_mem_per_sm=49152, regs_per_sm=65536, reg_alloc_unit=256, shared_alloc_unit=256,
    ),
    "cc35": DeviceSpec(
        name="cc35", max_warps_per_sm=64, max_blocks_per_sm=16, max_threads_per_block=1024,
        shared_mem_per_sm=49152, regs_per_sm=65536, reg_alloc_unit=256, shared_alloc_unit=256,
    ),
    "cc20": DeviceSpec(
        name="cc20", max_warps_per_sm=48, max_blocks_per_sm=8, max_threads_per_block=1024,
        shared_mem_per_sm=49152, regs_per_sm=32768, reg_alloc_unit=64, shared_alloc_unit=128,
    ),
}


def device_preset(name: str) -> DeviceSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown device preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None


def load_device(path) -> DeviceSpec:
    with open(path) as fh:
        return DeviceSpec.from_dict(json.load(fh))


def _round_up(n: int, unit: int) -> int:
    return -(-n // unit) * unit


def _check_kernel(dev: DeviceSpec, k: KernelSpec) -> None:
    if not 1 <= k.threads_per_block <= dev.max_threads_per_block:
        raise ValueError(
            f"threads_per_block={k.threads_per_block} outside [1, {dev.max_threads_per_block}] for {dev.name}")
    if k.regs_per_thread < 0 or k.shared_mem_per_block < 0:
        raise ValueError("kernel resources must be non-negative")


def block_limits(dev: DeviceSpec, k: KernelSpec) -> dict[str, float]:
    """Blocks per SM permitted by each constraint on its own."""
    _check_kernel(dev, k)
    wpb = -(-k.threads_per_block // dev.warp_size)
    if k.shared_mem_per_block == 0:
        shared = UNBOUNDED
    else:
        shared = dev.shared_mem_per_sm // _round_up(k.shared_mem_per_block, dev.shared_alloc_unit)
    if k.regs_per_thread == 0:
        regs = UNBOUNDED
    else:
        per_warp = _round_up(k.regs_per_thread * dev.warp_size, dev.reg_alloc_unit)
        regs = dev.regs_per_sm // (per_warp * wpb)
    return {
        "warps": dev.max_warps_per_sm // wpb,
        "blocks": dev.max_blocks_per_sm,
        "shared": shared,
        "registers": regs,
    }


def occupancy(dev: DeviceSpec, k: KernelSpec) -> OccupancyResult:
    limits = block_limits(dev, k)
    wpb = -(-k.threads_per_block // dev.warp_size)
    active = int(min(limits.values()))
    limiters = tuple(name for name in LIMITERS if limits[name] == active)
    return OccupancyResult(wpb, limits, active, active * wpb, active * wpb / dev.max_warps_per_sm, limiters)


def occupancy_bruteforce(dev: DeviceSpec, k: KernelSpec) -> int:
    """Largest block count satisfying all four constraints at once, by enumeration.

    Works from raw allocation totals rather than per-constraint quotients.
    """
    _check_kernel(dev, k)
    warps = -(-k.threads_per_block // dev.warp_size)
    shared = _round_up(k.shared_mem_per_block, dev.shared_alloc_unit)
    regs = warps * _round_up(k.regs_per_thread * dev.warp_size, dev.reg_alloc_unit)
    for b in range(dev.max_blocks_per_sm, -1, -1):
        if (b * warps <= dev.max_warps_per_sm
                and b * shared <= dev.shared_mem_per_sm
                and b * regs <= dev.regs_per_sm):
            return b
    return 0


def recommend_block_size(dev: DeviceSpec, regs_per_thread: int, shared_mem_per_block: int
                         ) -> tuple[int, OccupancyResult]:
    """Warp-multiple block size with the highest occupancy; ties go to the largest size."""
    best = None
    for size in range(dev.warp_size, dev.max_threads_per_block + 1, dev.warp_size):
        res = occupancy(dev, KernelSpec(size, regs_per_thread, shared_mem_per_block))
        if res.active_blocks >= 1 and (best is None or res.occupancy >= best[1].occupancy):
            best = (size, res)
    if best is None:
        raise ValueError(
            f"no block size fits {dev.name} with {regs_per_thread} regs/thread and "
            f"{shared_mem_per_block} B shared memory")
    return best


def occupancy_curve(dev: DeviceSpec, regs_per_thread: int, shared_mem_per_block: int) -> list[tuple[int, float]]:
    return [
        (size, occupancy(dev, KernelSpec(size, regs_per_thread, shared_mem_per_block)).occupancy)
        for size in range(dev.warp_size, dev.max_threads_per_block + 1, dev.warp_size)
    ]


def report(dev: DeviceSpec, k: KernelSpec, recommend: bool = False) -> dict:
    res = occupancy(dev, k)
    out = {
        "device": {_camel(key): v for key, v in asdict(dev).items()},
        "kernel": {_camel(key): v for key, v in asdict(k).items()},
    }
    out.update(res.to_json())
    out["recommendation"] = None
    if recommend:
        size, best = recommend_block_size(dev, k.regs_per_thread, k.shared_mem_per_block)
        out["recommendation"] = {"blockSize": size, **best.to_json()}
    return out
