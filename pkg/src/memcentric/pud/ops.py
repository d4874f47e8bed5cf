"""In-subarray micro-operations: copy, majority, NOT, multi-input logic, TRNG.

Rows in a :class:`MicroOp` are either :class:`RowAddress` values, which must
all sit in one subarray, or plain ints interpreted as rows of the subarray
passed to :func:`exec_microop`.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..geometry import ProtocolError, RowAddress

MAX_COPY_DESTS = 31
MAX_LOGIC_INPUTS = 16
SIMUL_ACT_ROWS = (2, 4, 8, 16, 32)
LOGIC_FNS = ("AND", "NAND", "OR", "NOR")

KINDS = ("ROWCLONE", "MULTI_COPY", "TRA_MAJ", "NOT", "MULTI_INPUT", "SIMUL_ACT", "SET_CONST")

# success-probability class of each op's destination bits
_NOISE_CLASS = {"ROWCLONE": "copy", "MULTI_COPY": "copy", "SET_CONST": "copy",
                "TRA_MAJ": "logic", "MULTI_INPUT": "logic", "NOT": "not"}


class PudError(ValueError):
    """A micro-op violates its structural limits."""


@dataclass(frozen=True)
class NoiseModel:
    enabled: bool = False
    p_copy: float = 0.9998
    p_logic: float = 0.94
    p_not: float = 0.94

    def __post_init__(self):
        for name in ("p_copy", "p_logic", "p_not"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise PudError(f"{name} must lie in (0, 1], got {v}")

    def success(self, kind: str) -> float:
        cls = _NOISE_CLASS.get(kind)
        return 1.0 if cls is None else getattr(self, f"p_{cls}")


@dataclass(frozen=True)
class MicroOp:
    kind: str
    srcs: tuple = ()
    dsts: tuple = ()
    fn: Optional[str] = None
    bit: Optional[int] = None

    def __post_init__(self):
        k = self.kind
        if k not in KINDS:
            raise PudError(f"unknown micro-op {k!r}")
        if k == "ROWCLONE" and (len(self.srcs), len(self.dsts)) != (1, 1):
            raise PudError("ROWCLONE takes one source and one destination")
        if k == "MULTI_COPY" and not (len(self.srcs) == 1 and 1 <= len(self.dsts) <= MAX_COPY_DESTS):
            raise PudError(f"MULTI_COPY takes one source and 1..{MAX_COPY_DESTS} destinations")
        if k == "TRA_MAJ":
            if len(self.srcs) != 3 or len(set(self.srcs)) != 3:
                raise PudError("TRA_MAJ needs three distinct rows")
        if k == "NOT" and (len(self.srcs), len(self.dsts)) != (1, 1):
            raise PudError("NOT takes one source and one destination")
        if k == "MULTI_INPUT":
            if self.fn not in LOGIC_FNS:
                raise PudError(f"MULTI_INPUT fn must be one of {LOGIC_FNS}")
            if not 2 <= len(self.srcs) <= MAX_LOGIC_INPUTS or len(self.dsts) != 1:
                raise PudError(f"MULTI_INPUT takes 2..{MAX_LOGIC_INPUTS} inputs and one destination")
        if k == "SIMUL_ACT":
            if len(self.dsts) not in SIMUL_ACT_ROWS or len(set(self.dsts)) != len(self.dsts):
                raise PudError(f"SIMUL_ACT activates {SIMUL_ACT_ROWS} distinct rows")
        if k == "SET_CONST" and (len(self.dsts) != 1 or self.bit not in (0, 1)):
            raise PudError("SET_CONST takes one row and a bit")

    def rows(self) -> tuple:
        return tuple(dict.fromkeys(self.srcs + self.dsts))

    def __str__(self):
        r = lambda x: f"r{x}" if isinstance(x, (int, np.integer)) else str(x)  # noqa: E731
        if self.kind == "TRA_MAJ":
            return "TRA_MAJ " + " ".join(map(r, self.srcs))
        if self.kind == "SET_CONST":
            return f"SET_CONST {r(self.dsts[0])} = {self.bit}"
        if self.kind == "SIMUL_ACT":
            return "SIMUL_ACT " + " ".join(map(r, self.dsts))
        head = self.kind if self.fn is None else f"{self.kind} {self.fn}"
        return f"{head} {' '.join(map(r, self.srcs))} -> {' '.join(map(r, self.dsts))}"


def rowclone(src, dst) -> MicroOp:
    return MicroOp("ROWCLONE", (src,), (dst,))


def multi_copy(src, dsts: Sequence) -> MicroOp:
    return MicroOp("MULTI_COPY", (src,), tuple(dsts))


def tra_maj(a, b, c) -> MicroOp:
    """Triple-row activation; all three rows end holding MAJ(a, b, c)."""
    return MicroOp("TRA_MAJ", (a, b, c), (a, b, c))


def not_op(src, dst) -> MicroOp:
    return MicroOp("NOT", (src,), (dst,))


def multi_input(fn: str, inputs: Sequence, dst) -> MicroOp:
    return MicroOp("MULTI_INPUT", tuple(inputs), (dst,), fn=fn)


def simul_act(rows: Sequence) -> MicroOp:
    return MicroOp("SIMUL_ACT", (), tuple(rows))


def set_const(row, bit: int) -> MicroOp:
    return MicroOp("SET_CONST", (), (row,), bit=bit)


def majority(rows: np.ndarray) -> np.ndarray:
    """Bitwise majority over the first axis (odd number of rows)."""
    n = rows.shape[0]
    return (rows.sum(axis=0, dtype=np.int32) * 2 > n).astype(np.uint8)


def padded_majority(fn: str, inputs: np.ndarray) -> np.ndarray:
    """k-input AND/OR (and complements) as MAJ over the inputs plus k-1
    constant rows: zeros for AND/NAND, ones for OR/NOR."""
    k = inputs.shape[0]
    pad = 0 if fn in ("AND", "NAND") else 1
    stacked = np.concatenate([inputs, np.full((k - 1,) + inputs.shape[1:], pad, dtype=np.uint8)])
    out = majority(stacked)
    return out ^ 1 if fn in ("NAND", "NOR") else out


def op_cycles(op: MicroOp, timing) -> int:
    """ACT-ACT-PRE for copies and NOT, ACT-PRE for activations that compute."""
    if op.kind in ("ROWCLONE", "MULTI_COPY", "NOT", "SET_CONST"):
        return 2 * timing.tRAS + timing.tRP
    return timing.tRAS + timing.tRP


def _resolve(device, op: MicroOp, subarray: Optional[RowAddress]) -> tuple[list, list, int]:
    g = device.geometry
    rows = op.rows()
    if all(isinstance(r, RowAddress) for r in rows):
        base = rows[0]
        for r in rows:
            g.check(r)
            if (r.channel, r.rank, r.bank, r.subarray) != (base.channel, base.rank, base.bank, base.subarray):
                raise PudError(f"rows {base} and {r} are in different subarrays")
        idx = {r: g.row_index(r) for r in rows}
    elif all(isinstance(r, (int, np.integer)) for r in rows):
        if subarray is None:
            raise PudError("integer rows need a subarray address")
        base = subarray.with_row(0)
        for r in rows:
            if not 0 <= r < g.rows_per_subarray:
                raise PudError(f"row {r} outside the subarray's {g.rows_per_subarray} rows")
        first = g.row_index(base)
        idx = {r: first + int(r) for r in rows}
    else:
        raise PudError("mixed row address forms in one micro-op")
    return [idx[r] for r in op.srcs], [idx[r] for r in op.dsts], g.row_index(base.with_row(0))


def exec_microop(device, op: MicroOp, noise: Optional[NoiseModel] = None,
                 rng: Optional[np.random.Generator] = None,
                 subarray: Optional[RowAddress] = None, lanes: Optional[tuple] = None) -> None:
    """Apply one micro-op to device rows.

    ``lanes=(lo, hi)`` limits the write to that column range; other columns of
    the destination rows keep their contents. With noise enabled every
    destination bit is independently kept correct with the op's success
    probability and flipped otherwise.
    """
    srcs, dsts, first = _resolve(device, op, subarray)
    if device.smd is not None and device.smd.locks.find(first) is not None:
        raise ProtocolError("PUD operation on an SMD-locked subarray")
    if device.open_row[device.bank_of(first)] >= 0:
        raise ProtocolError("PUD operation needs its bank precharged")
    cols = device.geometry.columns_per_row
    lo, hi = (0, cols) if lanes is None else lanes
    if not 0 <= lo < hi <= cols:
        raise PudError(f"lane range {lanes} outside [0, {cols}]")
    data = device.data
    k = op.kind
    if k in ("ROWCLONE", "MULTI_COPY"):
        result = data[srcs[0], lo:hi].copy()
    elif k == "TRA_MAJ":
        result = majority(data[srcs, lo:hi])
    elif k == "NOT":
        result = data[srcs[0], lo:hi] ^ 1
    elif k == "MULTI_INPUT":
        result = padded_majority(op.fn, data[srcs, lo:hi])
    elif k == "SET_CONST":
        result = np.full(hi - lo, op.bit, dtype=np.uint8)
    else:  # SIMUL_ACT: shared sense amplifiers settle to random values
        result = device.rngs["trng"].integers(0, 2, hi - lo, dtype=np.uint8)

    noise = noise or NoiseModel()
    p = noise.success(k) if noise.enabled else 1.0
    rng = rng if rng is not None else device.rngs["noise"]
    stats = pud_stats(device)
    for d in dsts:
        out = result
        if p < 1.0:
            flips = (rng.random(hi - lo) >= p).astype(np.uint8)
            out = result ^ flips
            stats[f"{_NOISE_CLASS[k]}_errors"] += int(flips.sum())
        if k in _NOISE_CLASS:
            stats[f"{_NOISE_CLASS[k]}_bits"] += hi - lo
        data[d, lo:hi] = out
        device.reference[d, lo:hi] = out
    stats[k] += 1
    device.cycle += op_cycles(op, device.timing)


def pud_stats(device) -> Counter:
    st = getattr(device, "pud_counters", None)
    if st is None:
        st = device.pud_counters = Counter()
    return st


def success_rates(device) -> dict:
    st = pud_stats(device)
    out = {}
    for cls in ("copy", "logic", "not"):
        n = st[f"{cls}_bits"]
        if n:
            out[cls] = 1.0 - st[f"{cls}_errors"] / n
    return out
