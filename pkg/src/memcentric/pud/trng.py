"""True random numbers from simultaneous multi-row activation, plus sanity tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import RowAddress
from .ops import SIMUL_ACT_ROWS, PudError, exec_microop, simul_act

REFERENCE_GBPS = 3.44  # four-row activation, per channel
# throughput relative to four rows; 2 and 32 rows are placeholders
RELATIVE_THROUGHPUT = {2: 0.6, 4: 1.0, 8: 1.25, 16: 1.06, 32: 0.8}


def calibrate_fractions(targets_gbps: dict, row_bits: int, banks: int, op_latency_ns: float) -> dict:
    """Harvest fraction per row count that makes the model hit ``targets_gbps``."""
    return {n: t * op_latency_ns / (row_bits * banks) for n, t in targets_gbps.items()}


def _default_fractions():
    targets = {n: REFERENCE_GBPS * r for n, r in RELATIVE_THROUGHPUT.items()}
    return calibrate_fractions(targets, 65536, 16, 1000.0)


@dataclass(frozen=True)
class TrngModel:
    row_bits: int = 65536          # bits per row across the rank
    banks: int = 16                # banks harvested in parallel on a channel
    op_latency_ns: float = 1000.0  # one activation plus the readout of its row
    harvest_fraction: dict = field(default_factory=_default_fractions)

    def throughput_gbps(self, n_rows: int) -> float:
        if n_rows not in SIMUL_ACT_ROWS:
            raise PudError(f"n_rows must be one of {SIMUL_ACT_ROWS}")
        bits_per_op = self.harvest_fraction[n_rows] * self.row_bits * self.banks
        return bits_per_op / self.op_latency_ns


@dataclass
class TrngResult:
    bits: np.ndarray
    throughput_gbps: float
    ops: int


def quac_trng(device, n_rows: int, n_bits: int, subarray: RowAddress = RowAddress(),
              model: TrngModel = TrngModel(), max_ops: int = 1 << 20) -> TrngResult:
    """Harvest ``n_bits`` by repeatedly activating the first ``n_rows`` rows of
    a subarray together and reading back the settled row."""
    if n_rows not in SIMUL_ACT_ROWS:
        raise PudError(f"n_rows must be one of {SIMUL_ACT_ROWS}")
    g = device.geometry
    if n_rows > g.rows_per_subarray:
        raise PudError(f"{n_rows} rows exceed the subarray's {g.rows_per_subarray}")
    cols = g.columns_per_row
    need = -(-n_bits // cols)
    if n_bits < 0 or need > max_ops:
        raise PudError(f"{n_bits} bits need {need} activations, cap is {max_ops}")
    op = simul_act(range(n_rows))
    first = g.row_index(subarray.with_row(0))
    out = np.empty(need * cols, dtype=np.uint8)
    for k in range(need):
        exec_microop(device, op, subarray=subarray)
        out[k * cols:(k + 1) * cols] = device.data[first]
    return TrngResult(out[:n_bits], model.throughput_gbps(n_rows), need)


def monobit(bits: np.ndarray) -> tuple[float, float]:
    """Frequency test: (|ones/n - 0.5|, two-sided p-value)."""
    n = bits.size
    s = 2 * int(bits.sum()) - n
    return abs(s / n) / 2, math.erfc(abs(s) / math.sqrt(2 * n))


def runs_test(bits: np.ndarray) -> float:
    """Runs test p-value; 0.0 when the frequency prerequisite fails."""
    n = bits.size
    pi = bits.mean()
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        return 0.0
    runs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    num = abs(runs - 2 * n * pi * (1 - pi))
    return math.erfc(num / (2 * math.sqrt(2 * n) * pi * (1 - pi)))
