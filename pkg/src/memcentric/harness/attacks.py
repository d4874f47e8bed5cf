"""Hammering pattern generators and a window-by-window attack driver.

A pattern fills each refresh window (one tREFI) with round-robin ACT/PRE
pairs over its aggressors. The many-sided pattern uses ``sides`` aggressors
and a window length that is a multiple of ``sides``, so every window ends on
the last aggressor: a sampler with fewer than ``sides`` slots that evicts its
oldest entry never holds the first aggressor when REF arrives.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..dram import Command, CommandKind
from ..geometry import ConfigError, RowAddress
from ..smd import MemoryController

PATTERNS = ("single", "double", "many_sided", "rowpress")


@dataclass(frozen=True)
class AttackPlan:
    pattern: str
    aggressors: tuple       # flat row ids, in issue order
    victim: int             # flat row id the pattern targets
    hold: int               # cycles each aggressor stays open
    pairs_per_window: int

    def window(self) -> np.ndarray:
        reps = self.pairs_per_window // len(self.aggressors)
        return np.tile(np.asarray(self.aggressors, dtype=np.int64), reps)

    def declared_counts(self) -> Counter:
        per = self.pairs_per_window // len(self.aggressors)
        return Counter({a: per for a in self.aggressors})


def plan_attack(section, geometry, timing) -> AttackPlan:
    if section.pattern not in PATTERNS:
        raise ConfigError(f"attack.pattern must be one of {PATTERNS}")
    base = RowAddress(0, 0, section.bank, section.subarray, 0)
    geometry.check(base)
    v = section.victim_row
    if section.pattern == "single":
        local = [v - 1]
    elif section.pattern == "double":
        local = [v - 1, v + 1]
    elif section.pattern == "rowpress":
        local = [v - 1]
    else:
        if section.sides < 2 or section.spacing < 1:
            raise ConfigError("attack.sides ≥ 2 and attack.spacing ≥ 1 violated")
        local = [v - 1 + k * section.spacing for k in range(section.sides)]
    for r in local + [v]:
        if not 0 <= r < geometry.rows_per_subarray:
            raise ConfigError(f"attack row {r} falls outside the subarray "
                              f"(0..{geometry.rows_per_subarray - 1})")
    hold = timing.tRAS if section.hold is None else section.hold
    if section.pattern == "rowpress" and section.hold is None:
        hold = timing.tRAS * section.press_hold_factor
    if hold < timing.tRAS:
        raise ConfigError(f"attack.hold {hold} shorter than tRAS={timing.tRAS}")
    first = geometry.row_index(base)
    per_window = max(1, (timing.tREFI - timing.tRC) // (hold + timing.tRP))
    per_window = max(len(local), per_window - per_window % len(local))
    return AttackPlan(section.pattern, tuple(first + r for r in local), first + v, hold, per_window)


@dataclass
class AttackResult:
    activations: int = 0
    windows: int = 0
    first_flip_activation: Optional[int] = None
    first_flip_cycle: Optional[int] = None
    events: list = field(default_factory=list)

    @property
    def flips(self) -> int:
        return len(self.events)


def run_attack(device, plan: AttackPlan, activations: int, refresh: bool = True,
               stop_on_first_flip: bool = False) -> AttackResult:
    """Hammer window by window, issuing one REF after each window."""
    if activations < 0:
        raise ConfigError("attack.activations ≥ 0 violated")
    res = AttackResult()
    ctrl = MemoryController(device)
    window = plan.window()
    while res.activations < activations:
        rows = window[:activations - res.activations]
        pos = 0
        while pos < rows.size:
            watch = res.first_flip_activation is None
            n, evs = device.hammer(rows[pos:], plan.hold, stop_on_flip=watch)
            if evs and watch:
                res.first_flip_activation = res.activations + pos + n
                res.first_flip_cycle = evs[0].cycle
            res.events += evs
            pos += n
            if evs and stop_on_first_flip:
                break
        res.activations += pos
        res.windows += 1
        if stop_on_first_flip and res.events:
            break
        if refresh:
            ctrl.submit(Command(CommandKind.REF, issue_cycle=device.cycle))
    return res
