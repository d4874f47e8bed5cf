"""Self-managing DRAM: chip-planned maintenance on lockable regions.

The chip plans refresh, read-disturbance mitigation and scrubbing tasks per
subarray, locks the task's region while it runs, and answers an ACT into a
locked (or draining) region with a NACK that names the region. The host side
is :class:`MemoryController`, which reissues rejected commands after a fixed
backoff.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .geometry import ConfigError, DramGeometry

SCOPES = ("subarray", "bank", "rank")
TASK_KINDS = ("refresh", "rh_mitigation", "scrub")


class SchedulingError(RuntimeError):
    """A maintenance task was started on a region that is already locked."""


class StarvationError(RuntimeError):
    """A command was rejected more times than the controller's retry cap."""


@dataclass(frozen=True, order=True)
class Region:
    scope: str
    path: tuple

    def rows(self, geometry: DramGeometry) -> range:
        """Flat row ids covered; regions are contiguous in the flat layout."""
        g = geometry
        if self.scope == "subarray":
            ch, rk, bk, sa = self.path
            first = ((ch * g.ranks_per_channel + rk) * g.banks_per_rank + bk) * g.subarrays_per_bank + sa
            size = g.rows_per_subarray
        elif self.scope == "bank":
            ch, rk, bk = self.path
            first = (ch * g.ranks_per_channel + rk) * g.banks_per_rank + bk
            size = g.rows_per_bank
        elif self.scope == "rank":
            ch, rk = self.path
            first = ch * g.ranks_per_channel + rk
            size = g.rows_per_bank * g.banks_per_rank
        else:
            raise ConfigError(f"unknown region scope {self.scope!r}")
        return range(first * size, (first + 1) * size)

    def contains(self, geometry: DramGeometry, row: int) -> bool:
        r = self.rows(geometry)
        return r.start <= row < r.stop

    def overlaps(self, geometry: DramGeometry, other: "Region") -> bool:
        a, b = self.rows(geometry), other.rows(geometry)
        return a.start < b.stop and b.start < a.stop

    def __str__(self):
        return f"{self.scope}:" + "/".join(map(str, self.path))


def region_of(geometry: DramGeometry, row: int, scope: str) -> Region:
    a = geometry.address(row)
    if scope == "subarray":
        return Region(scope, (a.channel, a.rank, a.bank, a.subarray))
    if scope == "bank":
        return Region(scope, (a.channel, a.rank, a.bank))
    if scope == "rank":
        return Region(scope, (a.channel, a.rank))
    raise ConfigError(f"unknown region scope {scope!r}")


@dataclass(frozen=True)
class MaintenanceTask:
    kind: str
    region: Region
    duration: int
    due_cycle: int

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("task duration > 0 violated")
        if self.kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.kind!r}")


@dataclass
class SmdConfig:
    enabled: bool = False
    # granularity a running task blocks; "rank" is the stall-everything baseline
    lock_scope: str = "subarray"
    refresh_duration: int = 128
    rh_duration: int = 64
    scrub_duration: int = 256
    scrub_period: int = 0  # cycles; 0 disables scrubbing
    rh_threshold: Optional[int] = None  # None disables chip-side RH mitigation
    rh_margin: float = 0.9
    rh_victims: int = 2
    refresh_guard: int = 1024
    retry_cap: int = 10_000

    def validate(self) -> "SmdConfig":
        if self.lock_scope not in SCOPES:
            raise ConfigError(f"smd.lock_scope must be one of {SCOPES}")
        for name in ("refresh_duration", "rh_duration", "scrub_duration", "retry_cap", "rh_victims"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"smd.{name} > 0 violated")
        if self.scrub_period < 0 or self.refresh_guard < 0:
            raise ConfigError("smd.scrub_period and smd.refresh_guard must be ≥ 0")
        if self.rh_threshold is not None and self.rh_threshold < 1:
            raise ConfigError("smd.rh_threshold ≥ 1 violated")
        if not 0 < self.rh_margin <= 1:
            raise ConfigError("smd.rh_margin must lie in (0, 1]")
        return self


@dataclass
class _Lock:
    lock_region: Region
    task: MaintenanceTask
    start: int
    release: int


@dataclass
class RegionLockTable:
    geometry: DramGeometry
    locks: list = field(default_factory=list)

    def find(self, row: int) -> Optional[_Lock]:
        for lk in self.locks:
            if lk.lock_region.contains(self.geometry, row):
                return lk
        return None

    def conflicts(self, region: Region) -> bool:
        return any(lk.lock_region.overlaps(self.geometry, region) for lk in self.locks)

    def add(self, lock: _Lock) -> None:
        if self.conflicts(lock.lock_region):
            raise SchedulingError(f"region {lock.lock_region} overlaps an active lock")
        self.locks.append(lock)

    def remove(self, task: MaintenanceTask) -> _Lock:
        for k, lk in enumerate(self.locks):
            if lk.task is task:
                return self.locks.pop(k)
        raise SchedulingError(f"task {task.kind}@{task.region} holds no lock")


class SmdEngine:
    """Chip-side maintenance state, attached to a Device."""

    def __init__(self, device, config: SmdConfig):
        self.device = device
        self.config = config.validate()
        g = device.geometry
        self.regions = [region_of(g, s * g.rows_per_subarray, "subarray")
                        for s in range(g.n_subarrays)]
        n = len(self.regions)
        w = device.timing.tREFW
        self.refresh_due = np.array([s * w // n for s in range(n)], dtype=np.int64)
        sp = self.config.scrub_period
        self.scrub_due = np.array([sp + s * sp // n for s in range(n)] if sp else [-1] * n,
                                  dtype=np.int64)
        self.busy = np.zeros(n, dtype=bool)  # planned or running
        self.queue: list[MaintenanceTask] = []
        self.locks = RegionLockTable(g)
        self.draining: set[int] = set()
        self.now = 0
        self.stats = Counter()
        self.completed: list[tuple[MaintenanceTask, int, int]] = []

    # -- helpers --------------------------------------------------------
    def _sub_index(self, region: Region) -> int:
        return region.rows(self.device.geometry).start // self.device.geometry.rows_per_subarray

    def lock_region_for(self, task: MaintenanceTask) -> Region:
        if self.config.lock_scope == "subarray":
            return task.region
        start = task.region.rows(self.device.geometry).start
        return region_of(self.device.geometry, start, self.config.lock_scope)

    def _has_open_row(self, region: Region) -> bool:
        g = self.device.geometry
        return any(r >= 0 and region.contains(g, int(r)) for r in self.device.open_row)

    # -- planning -------------------------------------------------------
    def plan(self, cycle: int) -> list[MaintenanceTask]:
        c = self.config
        dev = self.device
        out = []
        for s, region in enumerate(self.regions):
            if self.busy[s]:
                continue
            task = None
            if c.rh_threshold is not None:
                rows = region.rows(dev.geometry)
                if dev.act_counter[rows.start:rows.stop].max() >= c.rh_margin * c.rh_threshold:
                    task = MaintenanceTask("rh_mitigation", region, c.rh_duration, cycle)
            if task is None and self.refresh_due[s] <= cycle:
                task = MaintenanceTask("refresh", region, c.refresh_duration, int(self.refresh_due[s]))
            if task is None and self.scrub_due[s] >= 0 and self.scrub_due[s] <= cycle:
                task = MaintenanceTask("scrub", region, c.scrub_duration, int(self.scrub_due[s]))
            if task is not None:
                self.busy[s] = True
                out.append(task)
        self.stats["planned"] += len(out)
        return out

    def begin(self, task: MaintenanceTask, cycle: int) -> None:
        lock_region = self.lock_region_for(task)
        self.locks.add(_Lock(lock_region, task, cycle, cycle + task.duration))
        self.busy[self._sub_index(task.region)] = True
        self.stats["begun"] += 1

    def complete(self, task: MaintenanceTask, cycle: Optional[int] = None) -> None:
        lk = self.locks.remove(task)
        cycle = lk.release if cycle is None else cycle
        dev = self.device
        rows = task.region.rows(dev.geometry)
        s = self._sub_index(task.region)
        if task.kind == "refresh":
            dev.refresh_rows(np.arange(rows.start, rows.stop), cycle)
            self.refresh_due[s] = cycle + max(
                1, dev.timing.tREFW - task.duration - self.config.refresh_guard)
        elif task.kind == "rh_mitigation":
            hot = np.arange(rows.start, rows.stop)
            thr = self.config.rh_margin * self.config.rh_threshold
            hot = hot[dev.act_counter[hot] >= thr]
            for r in hot:
                K.refresh_radius(dev.acc, dev.last_refresh, int(r), rows.start, rows.stop,
                                 self.config.rh_victims, cycle)
                dev.act_counter[r] = 0
            self.stats["rh_rows"] += int(hot.size)
        else:
            bad = dev.data[rows.start:rows.stop] != dev.reference[rows.start:rows.stop]
            self.stats["scrub_detections"] += int(bad.sum())
            dev.data[rows.start:rows.stop] = dev.reference[rows.start:rows.stop]
            self.scrub_due[s] = cycle + self.config.scrub_period
        self.busy[s] = False
        self.stats[f"completed_{task.kind}"] += 1
        self.completed.append((task, lk.start, cycle))

    # -- time -----------------------------------------------------------
    def _next_time(self) -> Optional[int]:
        times = [lk.release for lk in self.locks.locks]
        idle = ~self.busy
        if idle.any():
            times.append(int(self.refresh_due[idle].min()))
            sd = self.scrub_due[idle & (self.scrub_due >= 0)]
            if sd.size:
                times.append(int(sd.min()))
        return min(times) if times else None

    def tick(self, now: int) -> None:
        """Advance chip-internal activity up to ``now``."""
        while True:
            t = self._next_time()
            step = now if t is None or t > now else max(t, self.now)
            self._settle(step)
            if step >= now:
                break
        self.now = max(self.now, now)

    def _settle(self, t: int) -> None:
        for lk in sorted(self.locks.locks, key=lambda lk: lk.release):
            if lk.release <= t:
                self.complete(lk.task, lk.release)
        self.queue.extend(self.plan(t))
        self.draining.clear()
        waiting = []
        for task in self.queue:
            lr = self.lock_region_for(task)
            if self.locks.conflicts(lr):
                waiting.append(task)
            elif self._has_open_row(lr):
                # hold new row opens off until the host closes its row here
                self.draining.add(self._sub_index(task.region))
                waiting.append(task)
            else:
                self.begin(task, t)
        self.queue = waiting
        self.now = max(self.now, t)

    # -- host-facing ----------------------------------------------------
    def filter_activate(self, row: int, cycle: int) -> Optional[Region]:
        lk = self.locks.find(row)
        if lk is not None:
            return lk.lock_region
        g = self.device.geometry
        for task in self.queue:
            if self._sub_index(task.region) in self.draining:
                lr = self.lock_region_for(task)
                if lr.contains(g, row):
                    return lr
        return None

    def audit_write(self, row: int) -> None:
        if self.locks.find(row) is not None:
            self.stats["audit_violations"] += 1
            raise SchedulingError(f"host write to locked row {row}")


# -- functional interface ------------------------------------------------

def smd_plan(device, cycle: int) -> list[MaintenanceTask]:
    if device.smd is None:
        return []
    return device.smd.plan(cycle)


def smd_begin(device, task: MaintenanceTask, cycle: Optional[int] = None) -> None:
    device.smd.begin(task, device.cycle if cycle is None else cycle)


def smd_complete(device, task: MaintenanceTask, cycle: Optional[int] = None) -> None:
    device.smd.complete(task, cycle)


def smd_filter(device, cmd):
    """None when ``cmd`` may proceed, else the Region it was rejected for."""
    from .dram import CommandKind

    if device.smd is None or cmd.kind is not CommandKind.ACT:
        return None
    return device.smd.filter_activate(device.index(cmd.addr), max(cmd.issue_cycle, device.cycle))


@dataclass
class RetryRecord:
    first_cycle: int
    retries: int = 0
    added_latency: int = 0


class MemoryController:
    """Issues commands and reissues any that the chip rejects.

    NACKs are retried every ``backoff`` cycles; ALERT rejections are retried
    at the release cycle the chip reports. No command is dropped; exceeding
    ``retry_cap`` raises :class:`StarvationError`.
    """

    def __init__(self, device, backoff: Optional[int] = None, retry_cap: Optional[int] = None):
        self.device = device
        self.backoff = backoff if backoff is not None else device.timing.nack_retry_backoff
        cap = retry_cap
        if cap is None:
            cap = device.smd.config.retry_cap if device.smd is not None else 10_000
        self.retry_cap = cap
        self.records: list[RetryRecord] = []
        self.latency_hist: Counter = Counter()

    def retry(self, cmd, response):
        from .dram import Command

        if response.retry_at is not None:
            at = response.retry_at
        else:
            at = response.completion_cycle - 1 + self.backoff
        return Command(cmd.kind, cmd.addr, cmd.payload, at)

    def submit(self, cmd):
        first = max(cmd.issue_cycle, self.device.cycle)
        rec = RetryRecord(first)
        resp = self.device.issue(cmd)
        while resp.rejected:
            rec.retries += 1
            if rec.retries > self.retry_cap:
                raise StarvationError(
                    f"{cmd.kind.value} {cmd.addr} rejected {rec.retries} times; "
                    "maintenance duration too long for the retry cap")
            cmd = self.retry(cmd, resp)
            resp = self.device.issue(cmd)
        if rec.retries:
            start = resp.completion_cycle - self._latency(cmd.kind)
            rec.added_latency = max(0, start - first)
        self.records.append(rec)
        self.latency_hist[rec.added_latency] += 1
        return resp

    def _latency(self, kind) -> int:
        from .dram import COLUMN_CYCLES, CommandKind

        t = self.device.timing
        return {CommandKind.ACT: t.tRCD, CommandKind.PRE: t.tRP, CommandKind.REF: t.tRC,
                CommandKind.RD: COLUMN_CYCLES, CommandKind.WR: COLUMN_CYCLES}[kind]

    @property
    def total_retries(self) -> int:
        return sum(r.retries for r in self.records)


def mc_retry(controller: MemoryController, cmd, nack):
    """The rescheduled form of a command the chip rejected."""
    return controller.retry(cmd, nack)
