"""DRAM organization, timing vocabulary and row addressing."""

from __future__ import annotations

from dataclasses import dataclass


class ConfigError(ValueError):
    """A geometry, timing or model parameter violates its invariant."""


class AddressError(IndexError):
    """A row address falls outside the device geometry."""


class ProtocolError(RuntimeError):
    """A command is illegal for the current bank state."""


@dataclass(frozen=True)
class DramGeometry:
    channels: int = 1
    ranks_per_channel: int = 1
    banks_per_rank: int = 4
    subarrays_per_bank: int = 8
    rows_per_subarray: int = 512
    columns_per_row: int = 1024

    def __post_init__(self):
        for name in ("channels", "ranks_per_channel", "banks_per_rank",
                     "subarrays_per_bank", "rows_per_subarray", "columns_per_row"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} ≥ 1 violated ({getattr(self, name)})")
        if self.rows_per_subarray < 4:
            raise ConfigError(f"rows_per_subarray ≥ 4 violated ({self.rows_per_subarray})")
        if self.columns_per_row % 8:
            raise ConfigError(
                f"columns_per_row multiple of 8 violated ({self.columns_per_row})")

    @property
    def n_banks(self) -> int:
        return self.channels * self.ranks_per_channel * self.banks_per_rank

    @property
    def n_subarrays(self) -> int:
        return self.n_banks * self.subarrays_per_bank

    @property
    def rows_per_bank(self) -> int:
        return self.subarrays_per_bank * self.rows_per_subarray

    @property
    def n_rows(self) -> int:
        return self.n_subarrays * self.rows_per_subarray

    def row_index(self, addr: "RowAddress") -> int:
        """Flat row id: banks, then subarrays, then rows, all contiguous."""
        self.check(addr)
        bank = (addr.channel * self.ranks_per_channel + addr.rank) * self.banks_per_rank + addr.bank
        return (bank * self.subarrays_per_bank + addr.subarray) * self.rows_per_subarray + addr.row

    def address(self, index: int) -> "RowAddress":
        if not 0 <= index < self.n_rows:
            raise AddressError(f"row index {index} outside [0, {self.n_rows})")
        index, row = divmod(index, self.rows_per_subarray)
        index, sub = divmod(index, self.subarrays_per_bank)
        index, bank = divmod(index, self.banks_per_rank)
        channel, rank = divmod(index, self.ranks_per_channel)
        return RowAddress(channel, rank, bank, sub, row)

    def check(self, addr: "RowAddress") -> None:
        limits = (self.channels, self.ranks_per_channel, self.banks_per_rank,
                  self.subarrays_per_bank, self.rows_per_subarray)
        for name, value, limit in zip(RowAddress.__dataclass_fields__, addr, limits):
            if not 0 <= value < limit:
                raise AddressError(f"{name}={value} outside [0, {limit})")


@dataclass(frozen=True)
class TimingParams:
    """Cycle counts for the command-level timing model.

    ``tRC`` defaults to ``tRAS + tRP`` and ``tREFW`` is the 64 ms window at
    ``clock_ns``; both may be given explicitly but must stay consistent.
    """

    clock_ns: float = 1.25
    tRCD: int = 11
    tRAS: int = 28
    tRP: int = 11
    tRC: int = 0
    tREFI: int = 6240
    tREFW: int = 0
    nack_retry_backoff: int = 20

    def __post_init__(self):
        if self.tRC == 0:
            object.__setattr__(self, "tRC", self.tRAS + self.tRP)
        if self.tREFW == 0:
            object.__setattr__(self, "tREFW", int(round(64e6 / self.clock_ns)))
        if self.clock_ns <= 0:
            raise ConfigError("clock_ns > 0 violated")
        for name in ("tRCD", "tRAS", "tRP", "tRC", "tREFI", "tREFW", "nack_retry_backoff"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} > 0 violated")
        if self.tRC != self.tRAS + self.tRP:
            raise ConfigError(f"tRC = tRAS + tRP violated ({self.tRC} != {self.tRAS + self.tRP})")
        if not self.tREFW >= self.tREFI >= self.tRC:
            raise ConfigError("tREFW ≥ tREFI ≥ tRC violated")

    @property
    def refresh_groups(self) -> int:
        return max(1, self.tREFW // self.tREFI)


@dataclass(frozen=True, order=True)
class RowAddress:
    channel: int = 0
    rank: int = 0
    bank: int = 0
    subarray: int = 0
    row: int = 0

    def __iter__(self):
        return iter((self.channel, self.rank, self.bank, self.subarray, self.row))

    def with_row(self, row: int) -> "RowAddress":
        return RowAddress(self.channel, self.rank, self.bank, self.subarray, row)

    def __str__(self):
        return f"{self.channel}/{self.rank}/{self.bank}/{self.subarray}/{self.row}"
