"""Command traces: one whitespace-separated record per line, ``#`` comments.

    cycle  op  channel rank bank subarray row  [hex payload, WR only]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..dram import Command, CommandKind
from ..geometry import ConfigError, DramGeometry, RowAddress


class TraceError(ConfigError):
    """A trace line is malformed."""


@dataclass(frozen=True)
class TraceRecord:
    cycle: int
    op: CommandKind
    addr: RowAddress = RowAddress()
    payload: Optional[bytes] = None

    def command(self, columns: int) -> Command:
        bits = None
        if self.op is CommandKind.WR:
            bits = np.unpackbits(np.frombuffer(self.payload, dtype=np.uint8), bitorder="little")
            if bits.size != columns:
                raise TraceError(f"WR payload has {bits.size} bits, rows have {columns}")
        return Command(self.op, self.addr, bits, self.cycle)

    def format(self) -> str:
        a = self.addr
        s = f"{self.cycle} {self.op.value} {a.channel} {a.rank} {a.bank} {a.subarray} {a.row}"
        return s + (f" {self.payload.hex()}" if self.payload is not None else "")


def parse_trace(lines: Iterable[str], geometry: Optional[DramGeometry] = None,
                source: str = "<trace>") -> list[TraceRecord]:
    out: list[TraceRecord] = []
    last: dict = {}
    for no, raw in enumerate(lines, 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        where = f"{source}:{no}"
        if len(toks) not in (7, 8):
            raise TraceError(f"{where}: expected 'cycle op ch rank bank subarray row [hex]', "
                             f"got {len(toks)} fields")
        try:
            cycle, ch, rk, bk, sa, row = (int(toks[i]) for i in (0, 2, 3, 4, 5, 6))
        except ValueError:
            raise TraceError(f"{where}: non-integer cycle or address field") from None
        try:
            op = CommandKind(toks[1].upper())
        except ValueError:
            raise TraceError(f"{where}: unknown op {toks[1]!r}") from None
        if cycle < 0:
            raise TraceError(f"{where}: negative cycle")
        if cycle < last.get(ch, 0):
            raise TraceError(f"{where}: cycle {cycle} goes backwards on channel {ch}")
        last[ch] = cycle
        payload = None
        if len(toks) == 8:
            if op is not CommandKind.WR:
                raise TraceError(f"{where}: payload only allowed on WR")
            try:
                payload = bytes.fromhex(toks[7])
            except ValueError:
                raise TraceError(f"{where}: bad hex payload") from None
        elif op is CommandKind.WR:
            raise TraceError(f"{where}: WR needs a hex payload")
        addr = RowAddress(ch, rk, bk, sa, row)
        if geometry is not None:
            try:
                geometry.check(addr)
            except IndexError as e:
                raise TraceError(f"{where}: {e}") from None
        out.append(TraceRecord(cycle, op, addr, payload))
    return out


def read_trace(path, geometry: Optional[DramGeometry] = None) -> list[TraceRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh, geometry, str(path))


def write_trace(records: Iterable[TraceRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# cycle op channel rank bank subarray row [payload]\n")
        for r in records:
            fh.write(r.format() + "\n")


def uniform_workload(geometry: DramGeometry, rng: np.random.Generator, requests: int,
                     banks: int = 4, interval: int = 20, write_fraction: float = 0.5,
                     subarrays: Optional[int] = None) -> list[TraceRecord]:
    """Closed-page requests spread uniformly over the first ``banks`` banks.

    Each request is ACT, RD or WR, PRE to a random row; arrivals are spaced
    ``interval`` cycles apart.
    """
    if not 1 <= banks <= geometry.n_banks:
        raise ConfigError(f"workload.synthetic.banks must lie in 1..{geometry.n_banks}")
    if requests < 0 or interval < 0 or not 0 <= write_fraction <= 1:
        raise ConfigError("workload.synthetic: requests, interval ≥ 0 and write_fraction in [0, 1]")
    subs = geometry.subarrays_per_bank if subarrays is None else subarrays
    if not 1 <= subs <= geometry.subarrays_per_bank:
        raise ConfigError(f"workload.synthetic.subarrays must lie in 1..{geometry.subarrays_per_bank}")
    flat_bank = rng.integers(0, banks, requests)
    sub = rng.integers(0, subs, requests)
    row = rng.integers(0, geometry.rows_per_subarray, requests)
    is_wr = rng.random(requests) < write_fraction
    nbytes = geometry.columns_per_row // 8
    out: list[TraceRecord] = []
    per_rank = geometry.banks_per_rank
    for k in range(requests):
        b = int(flat_bank[k])
        rank_flat, bank = divmod(b, per_rank)
        ch, rk = divmod(rank_flat, geometry.ranks_per_channel)
        a = RowAddress(ch, rk, bank, int(sub[k]), int(row[k]))
        c = k * interval
        out.append(TraceRecord(c, CommandKind.ACT, a))
        if is_wr[k]:
            out.append(TraceRecord(c, CommandKind.WR, a, rng.bytes(nbytes)))
        else:
            out.append(TraceRecord(c, CommandKind.RD, a))
        out.append(TraceRecord(c, CommandKind.PRE, a))
    return out
