"""Vertical (bit-sliced) data layout: bit i of element j lives at row i, column j."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np


class CapacityError(ValueError):
    """Operands or live values do not fit in the available rows or lanes."""


def transpose_in(values: Sequence[int], bits: int, columns: Optional[int] = None,
                 max_rows: Optional[int] = None) -> np.ndarray:
    """Little-endian bit planes, shape ``(bits, len(values))`` or ``(bits, columns)``."""
    v = np.asarray(values, dtype=np.uint64)
    if v.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if not 1 <= bits <= 64:
        raise CapacityError(f"element width {bits} outside 1..64")
    if columns is not None and v.size > columns:
        raise CapacityError(f"{v.size} values exceed {columns} lanes")
    if max_rows is not None and bits > max_rows:
        raise CapacityError(f"{bits}-bit elements exceed {max_rows} data rows")
    if bits < 64 and v.size and int(v.max()) >> bits:
        raise CapacityError(f"value {int(v.max())} does not fit in {bits} bits")
    width = v.size if columns is None else columns
    out = np.zeros((bits, width), dtype=np.uint8)
    shifts = np.arange(bits, dtype=np.uint64)[:, None]
    out[:, :v.size] = ((v[None, :] >> shifts) & np.uint64(1)).astype(np.uint8)
    return out


def transpose_out(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.uint64)
    if rows.ndim != 2 or rows.shape[0] > 64:
        raise CapacityError("expected at most 64 bit planes of equal width")
    shifts = np.arange(rows.shape[0], dtype=np.uint64)[:, None]
    return np.bitwise_or.reduce(rows << shifts, axis=0) if rows.shape[0] else np.zeros(
        rows.shape[1], dtype=np.uint64)
