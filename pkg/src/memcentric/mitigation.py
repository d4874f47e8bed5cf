"""Read-disturbance mitigations (PARA, TRR sampler, PRAC) and periodic refresh."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .geometry import ConfigError, RowAddress

KINDS = ("none", "para", "trr", "prac")


@dataclass
class MitigationConfig:
    kind: str = "none"
    p: Optional[float] = None
    sampler_slots: Optional[int] = None
    per_refresh_checks: Optional[int] = None
    threshold: Optional[int] = None
    recovery_cycles: int = 350
    victims_refreshed: int = 2  # rows refreshed on each side of an alerting row

    def validate(self) -> "MitigationConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"mitigation.kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "para":
            if self.p is None:
                raise ConfigError("mitigation.p is required for kind='para'")
            if not 0 < self.p <= 1:
                raise ConfigError("0 < p ≤ 1 violated")
        if self.kind == "trr":
            if self.sampler_slots is None:
                raise ConfigError("mitigation.sampler_slots is required for kind='trr'")
            if self.sampler_slots < 1:
                raise ConfigError("sampler_slots ≥ 1 violated")
            if self.per_refresh_checks is None:
                self.per_refresh_checks = self.sampler_slots
            if self.per_refresh_checks < 1:
                raise ConfigError("per_refresh_checks ≥ 1 violated")
        if self.kind == "prac":
            if self.threshold is None:
                raise ConfigError("mitigation.threshold is required for kind='prac'")
            if self.threshold < 1:
                raise ConfigError("T ≥ 1 violated")
        if self.recovery_cycles < 1:
            raise ConfigError("recovery_cycles ≥ 1 violated")
        if self.victims_refreshed < 1:
            raise ConfigError("victims_refreshed ≥ 1 violated")
        return self

    @classmethod
    def para(cls, p: float) -> "MitigationConfig":
        return cls("para", p=p).validate()

    @classmethod
    def trr(cls, sampler_slots: int, per_refresh_checks: Optional[int] = None) -> "MitigationConfig":
        return cls("trr", sampler_slots=sampler_slots, per_refresh_checks=per_refresh_checks).validate()

    @classmethod
    def prac(cls, threshold: int, recovery_cycles: int = 350,
             victims_refreshed: int = 2) -> "MitigationConfig":
        return cls("prac", threshold=threshold, recovery_cycles=recovery_cycles,
                   victims_refreshed=victims_refreshed).validate()


def para_on_activate(device, addr: RowAddress, rng: np.random.Generator,
                     cycle: Optional[int] = None) -> Optional[list[RowAddress]]:
    """With probability p refresh the ±1 neighbours; returns them if refreshed."""
    u = rng.random()
    if u >= device.mitigation.p:
        return None
    i = device.index(addr)
    lo, hi = device.subarray_bounds(i)
    cycle = device.cycle if cycle is None else cycle
    K.refresh_radius(device.acc, device.last_refresh, i, lo, hi, 1, cycle)
    device.stats[K.ST_PARA] += 1
    return [device.geometry.address(v) for v in (i - 1, i + 1) if lo <= v < hi]


def prac_on_precharge(device, addr: RowAddress, cycle: Optional[int] = None) -> bool:
    """Count the activation; on reaching T assert ALERT and run recovery.

    Recovery refreshes ``victims_refreshed`` rows on each side and zeroes the
    counter immediately; the chip then rejects every command until
    ``recovery_cycles`` have elapsed.
    """
    from .dram import AlertState

    m = device.mitigation
    cycle = device.cycle if cycle is None else cycle
    i = device.index(addr)
    lo, hi = device.subarray_bounds(i)
    n = K.prac_precharge(device.acc, device.act_counter, device.last_refresh, i, lo, hi,
                         m.threshold, m.victims_refreshed, cycle)
    if n < 0:
        return False
    device.stats[K.ST_ALERTS] += 1
    device.stats[K.ST_PRAC_VICTIMS] += n
    device.alert = AlertState(True, cycle, cycle + m.recovery_cycles, [addr])
    return True


def trr_on_refresh(device, cycle: Optional[int] = None) -> list[RowAddress]:
    """Refresh ±1 neighbours of the most-activated sampled rows, then clear."""
    cycle = device.cycle if cycle is None else cycle
    filled = int(device.trr_meta[0])
    refreshed = []
    if filled:
        counts = device.trr_counts[:filled]
        order = np.argsort(-counts, kind="stable")[:device.mitigation.per_refresh_checks]
        for slot in order:
            agg = int(device.trr_rows[slot])
            lo, hi = device.subarray_bounds(agg)
            K.refresh_radius(device.acc, device.last_refresh, agg, lo, hi, 1, cycle)
            refreshed += [device.geometry.address(v) for v in (agg - 1, agg + 1) if lo <= v < hi]
    device.trr_rows[:] = -1
    device.trr_counts[:] = 0
    device.trr_meta[:] = 0
    device.counters["trr_refreshes"] += len(refreshed)
    return refreshed


class RefreshScheduler:
    """Controller-side periodic refresh: one REF per tREFI, round robin."""

    def __init__(self, device, enabled: bool = True, start: int = 0):
        self.device = device
        self.enabled = enabled
        self.next_due = start + device.timing.tREFI

    def tick(self, cycle: int) -> list:
        from .dram import Command, CommandKind

        issued = []
        if not self.enabled:
            return issued
        while cycle >= self.next_due:
            cmd = Command(CommandKind.REF, issue_cycle=self.next_due)
            resp = self.device.issue(cmd)
            if resp.rejected:
                # chip blocked by ALERT; REF goes out when it releases
                self.next_due = max(self.next_due, resp.retry_at or resp.completion_cycle)
                continue
            issued.append(cmd)
            self.next_due += self.device.timing.tREFI
        return issued


def refresh_tick(device, cycle: int) -> list:
    """Issue every REF due by ``cycle`` using the device's attached scheduler."""
    sched = getattr(device, "refresh_scheduler", None)
    if sched is None:
        sched = device.refresh_scheduler = RefreshScheduler(device)
    return sched.tick(cycle)


def prac_bound_exhaustive(n_rows: int, max_len: int, profile, threshold: int,
                          victims_refreshed: int = 2) -> tuple[int, float]:
    """Enumerate all ACT/PRE/REF command strings up to ``max_len`` commands
    on an ``n_rows`` subarray; returns (traces, peak accumulated disturbance)."""
    offsets, weights = profile.offset_arrays()
    traces, peak = K.prac_exhaustive(n_rows, max_len, offsets, weights,
                                     threshold, victims_refreshed)
    return int(traces), float(peak)
