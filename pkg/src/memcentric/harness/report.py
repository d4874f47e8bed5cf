"""Metrics reports and their CSV / JSON emission.

A report holds a main table, any number of named side tables and a flat
summary. CSV output writes the main table to the given path and each side
table (plus the summary as ``metric,value`` rows) to ``<stem>.<name>.csv``
next to it. Floats carry 6 significant digits in both formats, so the two
agree value for value and repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np


class InvariantViolation(RuntimeError):
    """A run produced internally inconsistent metrics."""


def fmt_value(v: Any) -> Any:
    """Normalise to plain JSON types, floats rounded to 6 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return float(f"{v:.6g}")
    if v is None:
        return None
    return str(v)


def csv_cell(v: Any) -> str:
    v = fmt_value(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise InvariantViolation(f"row of {len(values)} values for {len(self.columns)} columns")
        self.rows.append(tuple(values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([csv_cell(v) for v in r])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"columns": list(self.columns), "rows": [[fmt_value(v) for v in r] for r in self.rows]}


@dataclass
class MetricsReport:
    subcommand: str
    seed: int
    main: Table
    tables: dict = field(default_factory=dict)   # name -> Table
    summary: dict = field(default_factory=dict)  # metric -> scalar

    def check(self) -> "MetricsReport":
        """Non-negative counts and a latency histogram that covers every command."""
        for k, v in self.summary.items():
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool) and v < 0:
                raise InvariantViolation(f"negative count {k}={v}")
        hist = self.tables.get("latency_hist")
        if hist is not None and "commands" in self.summary:
            total = sum(r[-1] for r in hist.rows)
            if total != self.summary["commands"]:
                raise InvariantViolation(
                    f"latency histogram holds {total} commands, report counts {self.summary['commands']}")
        return self

    def summary_table(self) -> Table:
        t = Table(["metric", "value"])
        for k, v in self.summary.items():
            t.add(k, v)
        return t

    def to_json(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "seed": self.seed,
            "summary": {k: fmt_value(v) for k, v in self.summary.items()},
            "main": self.main.to_json(),
            "tables": {k: t.to_json() for k, t in self.tables.items()},
        }


def emit(report: MetricsReport, fmt: str = "csv", path: Optional[str] = None) -> list[Path]:
    """Write a report; returns the files written (none for stdout)."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    if fmt == "json":
        text = json.dumps(report.to_json(), indent=2, sort_keys=False) + "\n"
        if path is None:
            sys.stdout.write(text)
            return []
        p = Path(path)
        _write(p, text)
        return [p]
    if path is None:
        sys.stdout.write(report.main.to_csv())
        return []
    p = Path(path)
    written = [p]
    _write(p, report.main.to_csv())
    side = dict(report.tables)
    side["summary"] = report.summary_table()
    for name, t in side.items():
        q = p.with_name(f"{p.stem}.{name}.csv")
        _write(q, t.to_csv())
        written.append(q)
    return written


def _write(p: Path, text: str) -> None:
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise OSError(f"cannot write {p}: {e.strerror or e}") from None
