"""Read-disturbance fault model: RowHammer, RowPress and VRD.

Each row carries a base activation threshold drawn from a lognormal. A
precharge of an aggressor adds ``blast_weight[d] * press_weight(open time)``
to every victim within the blast radius; once a victim's accumulated
disturbance reaches its current threshold, random bits of the victim flip
and the accumulator restarts. A periodic refresh clears the accumulator and
redraws the current threshold as ``base * u`` with ``u ~ U[1/vrd_ratio_max, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .geometry import ConfigError, RowAddress

DEFAULT_ACMIN_MEDIAN = 4096.0
# lognormal sigma putting q90/q10 at one decade: ln(10) / (2 * 1.2816)
DEFAULT_ACMIN_SIGMA = 0.9


def _default_weights():
    return {1: 1.0, 2: 0.2}


@dataclass(frozen=True)
class DisturbanceProfile:
    enabled: bool = True
    acmin_log_mean: float = math.log(DEFAULT_ACMIN_MEDIAN)
    acmin_log_sigma: float = DEFAULT_ACMIN_SIGMA
    press_alpha: float = 2.0 / 3.0
    press_ton_ref: Optional[int] = None  # None: the device's tRAS
    vrd_ratio_max: float = 3.5
    blast_weights: dict = field(default_factory=_default_weights)
    flips_per_event: int = 1

    def __post_init__(self):
        w = {int(k): float(v) for k, v in dict(self.blast_weights).items()}
        object.__setattr__(self, "blast_weights", w)
        if self.acmin_log_sigma < 0:
            raise ConfigError("acmin_log_sigma ≥ 0 violated")
        if self.press_alpha < 0:
            raise ConfigError("press_alpha ≥ 0 violated")
        if self.vrd_ratio_max < 1:
            raise ConfigError("vrd_ratio_max ≥ 1 violated")
        if self.press_ton_ref is not None and self.press_ton_ref <= 0:
            raise ConfigError("press_ton_ref > 0 violated")
        if self.flips_per_event < 1:
            raise ConfigError("flips_per_event ≥ 1 violated")
        if not w or any(d < 1 for d in w):
            raise ConfigError("blast_weights keys must be distances ≥ 1")
        if any(not 0 < x <= 1 for x in w.values()):
            raise ConfigError("blast weights must lie in (0, 1]")
        ordered = [w[d] for d in sorted(w)]
        if any(a < b for a, b in zip(ordered, ordered[1:])):
            raise ConfigError("weight(±1) ≥ weight(±2) violated")

    @property
    def blast_weight_sum(self) -> float:
        """Total weight a single activation spreads over both sides."""
        return 2.0 * sum(self.blast_weights.values())

    def offset_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        offs, wts = [], []
        for d in sorted(self.blast_weights, reverse=True):
            offs.append(-d)
            wts.append(self.blast_weights[d])
        for d in sorted(self.blast_weights):
            offs.append(d)
            wts.append(self.blast_weights[d])
        return np.array(offs, dtype=np.int64), np.array(wts, dtype=np.float64)


@dataclass(frozen=True)
class BitflipEvent:
    victim: RowAddress
    bit_positions: tuple
    cycle: int
    cause: str  # "rowhammer" | "rowpress_amplified"


def sample_acmin(profile: DisturbanceProfile, rng: np.random.Generator, size=None):
    return rng.lognormal(profile.acmin_log_mean, profile.acmin_log_sigma, size=size)


def press_weight(open_cycles: int, profile: DisturbanceProfile, timing) -> float:
    """Disturbance contributed by one ACT-PRE pair relative to a minimal one."""
    if open_cycles < timing.tRAS:
        raise ValueError(f"open time {open_cycles} shorter than tRAS={timing.tRAS}")
    ref = profile.press_ton_ref or timing.tRAS
    return float(K.press_factor(float(open_cycles), profile.press_alpha, float(ref)))


def vrd_factors(profile: DisturbanceProfile, rng: np.random.Generator, n: int) -> np.ndarray:
    lo = 1.0 / profile.vrd_ratio_max
    return lo + (1.0 - lo) * rng.random(n)


def resample_vrd(row, profile: DisturbanceProfile, rng: np.random.Generator) -> None:
    """Redraw ``row.acmin_current`` for a new refresh window."""
    row.acmin_current = float(row.acmin_base * vrd_factors(profile, rng, 1)[0])


_CAUSES = {K.CAUSE_ROWHAMMER: "rowhammer", K.CAUSE_ROWPRESS: "rowpress_amplified"}


def inject_flips(device, victim: int, cycle: int, cause: int) -> BitflipEvent:
    """Flip ``flips_per_event`` distinct random bits of a victim row."""
    cols = device.geometry.columns_per_row
    k = min(device.profile.flips_per_event, cols)
    pos = np.sort(device.rngs["flips"].choice(cols, size=k, replace=False))
    device.data[victim, pos] ^= 1
    ev = BitflipEvent(device.geometry.address(victim), tuple(int(p) for p in pos),
                      int(cycle), _CAUSES[cause])
    device.events.append(ev)
    return ev


def on_aggressor_precharge(device, aggressor: RowAddress, open_cycles: int,
                           cycle: Optional[int] = None) -> list[BitflipEvent]:
    if not device.profile.enabled:
        return []
    cycle = device.cycle if cycle is None else cycle
    i = device.index(aggressor)
    lo, hi = device.subarray_bounds(i)
    press = press_weight(open_cycles, device.profile, device.timing)
    ev_rows = np.zeros(device.offsets.size, dtype=np.int64)
    n = K.disturb(device.acc, device.acmin_current, i, lo, hi, device.offsets,
                  device.weights, press, device.peak, ev_rows, 0)
    device.stats[K.ST_EVENTS] += n
    cause = K.CAUSE_ROWPRESS if press > 1.0 else K.CAUSE_ROWHAMMER
    return [inject_flips(device, int(v), cycle, cause) for v in ev_rows[:n]]


def victims_of(device, aggressor: RowAddress) -> np.ndarray:
    i = device.index(aggressor)
    lo, hi = device.subarray_bounds(i)
    v = i + device.offsets
    return v[(v >= lo) & (v < hi)]


def measure_acmin(device, aggressor: RowAddress, hold: Optional[int] = None,
                  cap: int = 1_000_000) -> Optional[int]:
    """Activations of ``aggressor`` until the first bitflip in a new window.

    The victims are refreshed first (which redraws their VRD threshold), the
    aggressor is hammered with open time ``hold`` (default tRAS), and the
    victims' data and accumulators are put back afterwards. Returns None when
    no flip appears within ``cap`` activations.
    """
    victims = victims_of(device, aggressor)
    device.refresh_rows(victims)
    saved_data = device.data[victims].copy()
    saved_ref = device.reference[victims].copy()
    saved_acc = device.acc[victims].copy()
    n_events_before = len(device.events)
    hold = device.timing.tRAS if hold is None else hold
    row = device.index(aggressor)
    result = None
    done = 0
    step = 4096
    while done < cap:
        n = min(step, cap - done)
        pairs, events = device.hammer(np.full(n, row, dtype=np.int64), hold, stop_on_flip=True)
        done += pairs
        if events:
            result = done
            break
        step = min(step * 2, 1 << 20)
    device.data[victims] = saved_data
    device.reference[victims] = saved_ref
    device.acc[victims] = saved_acc
    del device.events[n_events_before:]
    return result
