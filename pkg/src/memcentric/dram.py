"""Command-level DRAM device: row storage, bank state, timing and protocol.

A :class:`Device` owns every piece of mutable state (row data, per-row
disturbance and counter state, mitigation and maintenance state, RNG
streams). The disturbance, mitigation and smd modules hook into
:meth:`Device.issue`.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from . import disturbance, mitigation
from .disturbance import BitflipEvent, DisturbanceProfile
from .geometry import (AddressError, ConfigError, DramGeometry, ProtocolError,
                       RowAddress, TimingParams)
from .mitigation import MitigationConfig

# RD/WR occupy the command bus for a fixed burst.
COLUMN_CYCLES = 4

_RNG_STREAMS = ("acmin", "flips", "vrd", "para", "trng", "noise")


class CommandKind(enum.Enum):
    ACT = "ACT"
    PRE = "PRE"
    RD = "RD"
    WR = "WR"
    REF = "REF"


class ResponseKind(enum.Enum):
    OK = "OK"
    DATA = "DATA"
    NACK = "NACK"
    ALERT = "ALERT"


@dataclass
class Command:
    kind: CommandKind
    addr: RowAddress = RowAddress()
    payload: Optional[np.ndarray] = None
    issue_cycle: int = 0

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = CommandKind(self.kind)
        if (self.payload is not None) != (self.kind is CommandKind.WR):
            raise ProtocolError("payload present iff kind=WR")


@dataclass
class Response:
    kind: ResponseKind
    completion_cycle: int
    data: Optional[np.ndarray] = None
    region: Optional[object] = None
    # ALERT only: first cycle at which the chip accepts commands again
    retry_at: Optional[int] = None

    @property
    def rejected(self) -> bool:
        """True when the command had no effect and must be reissued."""
        return self.kind is ResponseKind.NACK or (
            self.kind is ResponseKind.ALERT and self.retry_at is not None)


@dataclass
class RowState:
    """Snapshot of one row, as exposed to callers and tests."""

    data: np.ndarray
    open_since: Optional[int]
    act_counter: int
    disturbance_accumulator: float
    acmin_base: float
    acmin_current: float
    last_refresh_cycle: int

    @property
    def status(self) -> str:
        return "closed" if self.open_since is None else "open"


@dataclass
class AlertState:
    asserted: bool = False
    since_cycle: int = 0
    release_cycle: int = 0
    pending_rows: list = field(default_factory=list)


class Device:
    """Mutable DRAM chip state. Build with :func:`new_device`."""

    def __init__(self, geometry: DramGeometry, timing: TimingParams, seed: int,
                 profile: Optional[DisturbanceProfile] = None,
                 mitigation_config: Optional[MitigationConfig] = None,
                 smd_config=None):
        if not isinstance(geometry, DramGeometry) or not isinstance(timing, TimingParams):
            raise ConfigError("geometry and timing must be DramGeometry / TimingParams")
        self.geometry = geometry
        self.timing = timing
        self.seed = int(seed)
        self.profile = profile if profile is not None else DisturbanceProfile(enabled=False)
        self.mitigation = mitigation_config if mitigation_config is not None else MitigationConfig()
        self.mitigation.validate()

        seqs = np.random.SeedSequence(self.seed).spawn(len(_RNG_STREAMS))
        self.rngs = {name: np.random.Generator(np.random.PCG64(s))
                     for name, s in zip(_RNG_STREAMS, seqs)}

        g = geometry
        n = g.n_rows
        self.cycle = 0
        self.data = np.zeros((n, g.columns_per_row), dtype=np.uint8)
        # last intentionally written contents; scrubbing compares against it
        self.reference = self.data.copy()
        self.open_row = np.full(g.n_banks, -1, dtype=np.int64)
        self.open_since = np.zeros(g.n_banks, dtype=np.int64)
        self.bank_ready = np.zeros(g.n_banks, dtype=np.int64)
        self.acc = np.zeros(n)
        self.act_counter = np.zeros(n, dtype=np.int64)
        if self.profile.enabled:
            self.acmin_base = disturbance.sample_acmin(self.profile, self.rngs["acmin"], size=n)
        else:
            self.acmin_base = np.full(n, np.inf)
        self.acmin_current = self.acmin_base.copy()
        self.last_refresh = np.zeros(n, dtype=np.int64)
        self.ref_ptr = 0
        self.alert = AlertState()

        slots = self.mitigation.sampler_slots or 1
        self.trr_rows = np.full(slots, -1, dtype=np.int64)
        self.trr_counts = np.zeros(slots, dtype=np.int64)
        self.trr_meta = np.zeros(2, dtype=np.int64)

        self.stats = np.zeros(K.N_STATS, dtype=np.int64)
        self.peak = np.zeros(1)
        self.counters = {"refreshes": 0, "trr_refreshes": 0, "alert_rejections": 0,
                         "nacks": 0, "commands": 0}
        self.events: list[BitflipEvent] = []
        self.offsets, self.weights = self.profile.offset_arrays()

        self.smd = None
        if smd_config is not None and smd_config.enabled:
            from .smd import SmdEngine
            self.smd = SmdEngine(self, smd_config)

    # -- addressing -----------------------------------------------------
    def index(self, addr: RowAddress) -> int:
        return self.geometry.row_index(addr)

    def bank_of(self, idx: int) -> int:
        return idx // self.geometry.rows_per_bank

    def subarray_bounds(self, idx: int) -> tuple[int, int]:
        rps = self.geometry.rows_per_subarray
        lo = (idx // rps) * rps
        return lo, lo + rps

    # -- backdoor -------------------------------------------------------
    def peek_row(self, addr: RowAddress) -> np.ndarray:
        return self.data[self.index(addr)].copy()

    def poke_row(self, addr: RowAddress, bits) -> None:
        i = self.index(addr)
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (self.geometry.columns_per_row,):
            raise ValueError(f"expected {self.geometry.columns_per_row} bits, got {bits.shape}")
        self.data[i] = bits
        self.reference[i] = bits

    def row_state(self, addr: RowAddress) -> RowState:
        i = self.index(addr)
        b = self.bank_of(i)
        opened = int(self.open_since[b]) if self.open_row[b] == i else None
        return RowState(self.data[i].copy(), opened, int(self.act_counter[i]),
                        float(self.acc[i]), float(self.acmin_base[i]),
                        float(self.acmin_current[i]), int(self.last_refresh[i]))

    def set_acmin(self, addr_or_index, base: float, current: Optional[float] = None) -> None:
        """Fixture helper: pin a row's base and current thresholds."""
        i = addr_or_index if isinstance(addr_or_index, (int, np.integer)) else self.index(addr_or_index)
        self.acmin_base[i] = base
        self.acmin_current[i] = base if current is None else current

    # -- refresh --------------------------------------------------------
    def refresh_rows(self, idx, cycle: Optional[int] = None, resample: bool = True) -> None:
        """Periodic-refresh effect on the given rows (VRD resampled per row)."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if idx.size == 0:
            return
        cycle = self.cycle if cycle is None else cycle
        self.acc[idx] = 0.0
        self.last_refresh[idx] = cycle
        if resample:
            u = disturbance.vrd_factors(self.profile, self.rngs["vrd"], idx.size)
            self.acmin_current[idx] = self.acmin_base[idx] * u

    def _refresh_group(self, cycle: int) -> np.ndarray:
        groups = self.timing.refresh_groups
        size = -(-self.geometry.n_rows // groups)
        lo = self.ref_ptr * size
        rows = np.arange(lo, min(lo + size, self.geometry.n_rows))
        self.ref_ptr = (self.ref_ptr + 1) % groups
        self.refresh_rows(rows, cycle)
        self.counters["refreshes"] += 1
        return rows

    # -- protocol -------------------------------------------------------
    def issue(self, cmd: Command) -> Response:
        kind = cmd.kind
        if kind is not CommandKind.REF:
            self.geometry.check(cmd.addr)
        start = max(int(cmd.issue_cycle), self.cycle)
        self.counters["commands"] += 1
        if self.smd is not None:
            self.smd.tick(start)

        if self.alert.asserted:
            if start < self.alert.release_cycle:
                self.counters["alert_rejections"] += 1
                self.cycle = start + 1
                return Response(ResponseKind.ALERT, self.cycle, retry_at=self.alert.release_cycle)
            self.alert = AlertState()

        if kind is CommandKind.ACT:
            return self._activate(cmd.addr, start)
        if kind is CommandKind.PRE:
            return self._precharge(cmd.addr, start)
        if kind is CommandKind.REF:
            self._refresh_group(start)
            if self.mitigation.kind == "trr":
                mitigation.trr_on_refresh(self, start)
            self.cycle = start + self.timing.tRC
            return Response(ResponseKind.OK, self.cycle)
        # RD / WR
        i = self.index(cmd.addr)
        b = self.bank_of(i)
        if self.open_row[b] != i:
            raise ProtocolError(f"{kind.value} to closed row {cmd.addr}")
        start = max(start, int(self.open_since[b]) + self.timing.tRCD)
        self.cycle = start + COLUMN_CYCLES
        if kind is CommandKind.RD:
            return Response(ResponseKind.DATA, self.cycle, data=self.data[i].copy())
        payload = np.asarray(cmd.payload, dtype=np.uint8)
        if payload.shape != (self.geometry.columns_per_row,):
            raise ProtocolError(f"WR payload must be {self.geometry.columns_per_row} bits")
        if self.smd is not None:
            self.smd.audit_write(i)
        self.data[i] = payload
        self.reference[i] = payload
        return Response(ResponseKind.OK, self.cycle)

    def _activate(self, addr: RowAddress, start: int) -> Response:
        i = self.index(addr)
        b = self.bank_of(i)
        if self.open_row[b] >= 0:
            raise ProtocolError(
                f"ACT {addr} to bank with open row {self.geometry.address(int(self.open_row[b]))}")
        if self.smd is not None:
            region = self.smd.filter_activate(i, start)
            if region is not None:
                self.counters["nacks"] += 1
                self.cycle = start + 1
                return Response(ResponseKind.NACK, self.cycle, region=region)
        start = max(start, int(self.bank_ready[b]))
        self.stats[K.ST_ACTS] += 1
        if self.mitigation.kind == "para":
            mitigation.para_on_activate(self, addr, self.rngs["para"], cycle=start)
        elif self.mitigation.kind == "trr":
            K.trr_observe(self.trr_rows, self.trr_counts, self.trr_meta, i)
        self.open_row[b] = i
        self.open_since[b] = start
        self.cycle = start + self.timing.tRCD
        return Response(ResponseKind.OK, self.cycle)

    def _precharge(self, addr: RowAddress, start: int) -> Response:
        i = self.index(addr)
        b = self.bank_of(i)
        t = self.timing
        if self.open_row[b] < 0:
            self.cycle = start + t.tRP
            return Response(ResponseKind.OK, self.cycle)
        opened = int(self.open_since[b])
        start = max(start, opened + t.tRAS, opened + t.tRCD)
        agg = self.geometry.address(int(self.open_row[b]))
        disturbance.on_aggressor_precharge(self, agg, start - opened, cycle=start)
        done = start + t.tRP
        self.open_row[b] = -1
        self.bank_ready[b] = done
        self.cycle = done
        alert = False
        if self.mitigation.kind == "prac":
            alert = mitigation.prac_on_precharge(self, agg, cycle=done)
        else:
            self.act_counter[int(self.index(agg))] += 1
        if self.smd is not None:
            self.smd.tick(done)
        return Response(ResponseKind.ALERT if alert else ResponseKind.OK, done)

    # -- batch path -----------------------------------------------------
    def _params(self):
        g, t, p, m = self.geometry, self.timing, self.profile, self.mitigation
        ip = np.zeros(K.N_IP, dtype=np.int64)
        ip[K.IP_TRCD], ip[K.IP_TRAS], ip[K.IP_TRP] = t.tRCD, t.tRAS, t.tRP
        ip[K.IP_RPS], ip[K.IP_RPB] = g.rows_per_subarray, g.rows_per_bank
        ip[K.IP_DIST] = int(p.enabled)
        ip[K.IP_MIT] = {"none": K.MIT_NONE, "para": K.MIT_PARA,
                        "trr": K.MIT_TRR, "prac": K.MIT_PRAC}[m.kind]
        ip[K.IP_T] = m.threshold or 0
        ip[K.IP_RADIUS] = m.victims_refreshed
        ip[K.IP_RECOVERY] = m.recovery_cycles
        fp = np.zeros(K.N_FP)
        fp[K.FP_ALPHA] = p.press_alpha
        fp[K.FP_TON_REF] = p.press_ton_ref or t.tRAS
        fp[K.FP_P] = m.p or 0.0
        return ip, fp

    def hammer(self, rows, holds=None, stop_on_flip: bool = False,
               chunk: int = 1 << 16) -> tuple[int, list[BitflipEvent]]:
        """Run ACT/PRE pairs on flat row ids through the compiled path.

        Equivalent to issuing ACT then PRE (after ``holds[i]`` cycles) for
        every row in order, retrying at the release cycle after an ALERT.
        Banks touched must be closed and SMD must be off.
        """
        if self.smd is not None:
            raise ProtocolError("batch hammering bypasses SMD region locks")
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= self.geometry.n_rows):
            raise AddressError("row id outside device")
        if holds is None:
            holds = np.full(rows.size, self.timing.tRAS, dtype=np.int64)
        holds = np.ascontiguousarray(np.broadcast_to(holds, rows.shape), dtype=np.int64)
        if np.any(self.open_row[np.unique(rows // self.geometry.rows_per_bank)] >= 0):
            raise ProtocolError("batch hammering needs the touched banks precharged")
        ip, fp = self._params()
        cap = max(256, 16 * self.offsets.size)
        ev_rows = np.zeros(cap, dtype=np.int64)
        ev_pair = np.zeros(cap, dtype=np.int64)
        ev_cycle = np.zeros(cap, dtype=np.int64)
        ev_cause = np.zeros(cap, dtype=np.int64)
        para = self.mitigation.kind == "para"
        events: list[BitflipEvent] = []
        done_total = 0
        release = self.alert.release_cycle if self.alert.asserted else 0
        while done_total < rows.size:
            r = rows[done_total:done_total + chunk]
            h = holds[done_total:done_total + chunk]
            if para:
                saved = self.rngs["para"].bit_generator.state
                u = self.rngs["para"].random(r.size)
            else:
                u = np.zeros(0)
            n, cyc, n_ev, release = K.run_pairs(
                r, h, u, self.cycle, release, self.acc, self.acmin_current, self.act_counter,
                self.last_refresh, self.bank_ready, self.open_since, self.trr_rows, self.trr_counts,
                self.trr_meta, ip, fp, self.offsets, self.weights, self.stats, self.peak,
                ev_rows, ev_pair, ev_cycle, ev_cause, stop_on_flip)
            if para and n < r.size:
                # hand back unused draws so the stream matches the command path
                self.rngs["para"].bit_generator.state = saved
                self.rngs["para"].random(n)
            self.cycle = int(cyc)
            for k in range(n_ev):
                events.append(disturbance.inject_flips(
                    self, int(ev_rows[k]), int(ev_cycle[k]), int(ev_cause[k])))
            done_total += int(n)
            if stop_on_flip and n_ev:
                break
        if release > self.cycle:
            self.alert = AlertState(True, self.cycle, int(release))
        else:
            self.alert = AlertState()
        return done_total, events

    # -- comparison -----------------------------------------------------
    def _state_arrays(self):
        return (self.data, self.reference, self.open_row, self.open_since, self.bank_ready,
                self.acc, self.act_counter, self.acmin_base, self.acmin_current,
                self.last_refresh, self.trr_rows, self.trr_counts, self.trr_meta)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64([self.cycle, self.ref_ptr]).tobytes())
        for a in self._state_arrays():
            h.update(np.ascontiguousarray(a).tobytes())
        for name in _RNG_STREAMS:
            h.update(repr(self.rngs[name].bit_generator.state).encode())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Device):
            return NotImplemented
        return self.fingerprint() == other.fingerprint()

    __hash__ = None


def new_device(geometry: Optional[DramGeometry] = None, timing: Optional[TimingParams] = None,
               seed: int = 0, profile: Optional[DisturbanceProfile] = None,
               mitigation_config: Optional[MitigationConfig] = None, smd_config=None) -> Device:
    return Device(geometry or DramGeometry(), timing or TimingParams(), seed,
                  profile, mitigation_config, smd_config)
