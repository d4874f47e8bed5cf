"""Analytical near-memory processing model: roofline timing, intensity-driven
kernel placement over heterogeneous units, and multi-unit scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .geometry import ConfigError

LINK_ENERGY_PER_BYTE = 10e-12  # joules, host link


class UnitClass(Enum):
    FC_PIM = "FC_PIM"
    ATTN_PIM = "ATTN_PIM"
    PU = "PU"


# tie-break preference, lower power first
CLASS_ORDER = {UnitClass.FC_PIM: 0, UnitClass.ATTN_PIM: 1, UnitClass.PU: 2}


class CapacityInfeasible(ValueError):
    """No unit can hold a kernel's data."""


@dataclass(frozen=True)
class UnitSpec:
    name: str
    unit_class: UnitClass
    peak_compute: float     # ops/s
    mem_bandwidth: float    # B/s
    capacity: float         # bytes
    link_bandwidth: float   # B/s to host
    energy_per_op: float = 1e-12
    energy_per_byte: float = 1e-12

    def __post_init__(self):
        if isinstance(self.unit_class, str):
            try:
                object.__setattr__(self, "unit_class", UnitClass(self.unit_class.upper()))
            except ValueError:
                raise ConfigError(f"unit {self.name!r}: class must be one of "
                                  f"{[c.value for c in UnitClass]}") from None
        for k in ("peak_compute", "mem_bandwidth", "capacity", "link_bandwidth"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"unit {self.name!r}: {k} > 0 violated")

    def scaled(self, factor: float) -> "UnitSpec":
        """Same unit with compute and memory bandwidth multiplied by ``factor``."""
        from dataclasses import replace

        return replace(self, peak_compute=self.peak_compute * factor,
                       mem_bandwidth=self.mem_bandwidth * factor)


@dataclass(frozen=True)
class KernelDescriptor:
    name: str
    compute_ops: float
    bytes_touched: float
    resident_unit: Optional[str] = None

    def __post_init__(self):
        if not (self.compute_ops > 0 and self.bytes_touched > 0):
            raise ConfigError(f"kernel {self.name!r}: compute_ops, bytes_touched > 0 violated")

    @property
    def arithmetic_intensity(self) -> float:
        return self.compute_ops / self.bytes_touched


@dataclass
class Placement:
    assignment: dict = field(default_factory=dict)   # kernel -> unit name
    times: dict = field(default_factory=dict)        # kernel -> seconds
    rationale: dict = field(default_factory=dict)    # kernel -> bound type
    energy: dict = field(default_factory=dict)       # kernel -> joules
    bytes_moved: float = 0.0
    makespan: float = 0.0


def roofline_parts(kernel: KernelDescriptor, unit: UnitSpec) -> tuple[float, float, float]:
    compute = kernel.compute_ops / unit.peak_compute
    memory = kernel.bytes_touched / unit.mem_bandwidth
    transfer = 0.0 if kernel.resident_unit == unit.name else kernel.bytes_touched / unit.link_bandwidth
    return compute, memory, transfer


def roofline_time(kernel: KernelDescriptor, unit: UnitSpec) -> float:
    """max(compute, memory) plus a host transfer when the data lives elsewhere."""
    compute, memory, transfer = roofline_parts(kernel, unit)
    return max(compute, memory) + transfer


def bound_type(kernel: KernelDescriptor, unit: UnitSpec) -> str:
    compute, memory, transfer = roofline_parts(kernel, unit)
    if transfer > max(compute, memory):
        return "transfer-bound"
    return "compute-bound" if compute > memory else "memory-bound"


def _preference(kernel: KernelDescriptor, unit: UnitSpec) -> tuple:
    return (roofline_time(kernel, unit), unit.name != kernel.resident_unit, CLASS_ORDER[unit.unit_class])


def best_unit(kernel: KernelDescriptor, units: Sequence[UnitSpec]) -> UnitSpec:
    feasible = [u for u in units if u.capacity >= kernel.bytes_touched]
    if not feasible:
        raise CapacityInfeasible(f"kernel {kernel.name!r} ({kernel.bytes_touched:g} B) fits no unit")
    best = feasible[0]
    for u in feasible[1:]:
        tu, tb = roofline_time(kernel, u), roofline_time(kernel, best)
        if math.isclose(tu, tb, rel_tol=1e-12):
            if _preference(kernel, u)[1:] < _preference(kernel, best)[1:]:
                best = u
        elif tu < tb:
            best = u
    return best


def papi_schedule(kernels: Iterable[KernelDescriptor], units: Sequence[UnitSpec],
                  link_energy_per_byte: float = LINK_ENERGY_PER_BYTE) -> Placement:
    """Greedy online placement: each kernel, in arrival order, goes to the
    unit with the smallest roofline time; units run their kernels serially."""
    units = list(units)
    if not units:
        raise ConfigError("papi_schedule needs at least one unit")
    p = Placement()
    busy = {u.name: 0.0 for u in units}
    for k in kernels:
        if k.name in p.assignment:
            raise ConfigError(f"kernel {k.name!r} listed twice")
        u = best_unit(k, units)
        t = roofline_time(k, u)
        moved = 0.0 if k.resident_unit == u.name else k.bytes_touched
        p.assignment[k.name] = u.name
        p.times[k.name] = t
        p.rationale[k.name] = bound_type(k, u)
        p.energy[k.name] = (k.compute_ops * u.energy_per_op + k.bytes_touched * u.energy_per_byte
                            + moved * link_energy_per_byte)
        p.bytes_moved += moved
        busy[u.name] += t
    p.makespan = max(busy.values())
    return p


def exhaustive_best(kernel: KernelDescriptor, units: Sequence[UnitSpec]) -> set:
    """Names of every feasible unit attaining the minimum roofline time."""
    feasible = [u for u in units if u.capacity >= kernel.bytes_touched]
    if not feasible:
        return set()
    t = min(roofline_time(kernel, u) for u in feasible)
    return {u.name for u in feasible if math.isclose(roofline_time(kernel, u), t, rel_tol=1e-12)}


@dataclass(frozen=True)
class ScalingPoint:
    n_units: int
    throughput: float  # ops/s
    ratio: float       # throughput / throughput at one unit


def unit_throughput(unit: UnitSpec, kernel: KernelDescriptor) -> float:
    """Steady-state ops/s of one unit streaming its own resident data."""
    return min(unit.peak_compute, unit.mem_bandwidth * kernel.arithmetic_intensity)


def scaling_curve(base_unit: UnitSpec, kernel: KernelDescriptor, n_units,
                  host_fed: bool = False) -> list[ScalingPoint]:
    """Throughput of n identical units sharing a perfectly divisible kernel.

    Resident data scales linearly with n. Host-fed data also has to cross the
    base unit's host link, which caps throughput at link_bandwidth × intensity.
    """
    ns = range(1, n_units + 1) if isinstance(n_units, int) else list(n_units)
    one = unit_throughput(base_unit, kernel)
    cap = base_unit.link_bandwidth * kernel.arithmetic_intensity if host_fed else math.inf

    def tp(n: int) -> float:
        if n < 1:
            raise ConfigError("n_units ≥ 1 violated")
        return min(n * one, cap)

    t1 = tp(1)
    return [ScalingPoint(n, tp(n), tp(n) / t1) for n in ns]


def default_unit_set() -> list[UnitSpec]:
    """A heterogeneous set shaped like an LLM serving node: a compute-leaning
    PIM unit for fully connected layers, a capacity-leaning PIM unit for
    attention, and a high-throughput processor reached over a host link."""
    return [
        UnitSpec("fc_pim", UnitClass.FC_PIM, 4e12, 1e12, 16e9, 64e9, 0.5e-12, 0.5e-12),
        UnitSpec("attn_pim", UnitClass.ATTN_PIM, 1e12, 1e12, 64e9, 64e9, 0.5e-12, 0.5e-12),
        UnitSpec("pu", UnitClass.PU, 1000e12, 3e12, 80e9, 64e9, 0.3e-12, 4e-12),
    ]
