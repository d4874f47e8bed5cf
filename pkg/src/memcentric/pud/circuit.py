"""Gate circuits, a text netlist reader, and a compiler to in-subarray programs.

Compilation bit-blasts vector gates, lowers every gate to majority and NOT
(AND as MAJ with a zero row, OR as MAJ with a one row), then assigns rows with
a linear-scan allocator. Each majority copies its operands into three
reserved compute rows, fires TRA_MAJ there and copies the result out, so
operand rows are never destroyed.

Subarray row map (local indices)::

    0           constant 0
    1           constant 1
    2..4        TRA work rows
    5..4+R      register rows (fast value storage)
    then        input bit planes, output bit planes, spill rows
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import RowAddress
from .layout import CapacityError, transpose_in, transpose_out
from .ops import MicroOp, NoiseModel, exec_microop, not_op, op_cycles, rowclone, set_const, tra_maj

GATE_ARITY = {"AND": 2, "OR": 2, "NAND": 2, "NOR": 2, "XOR": 2, "NOT": 1, "BUF": 1, "MAJ": 3}

ROW_C0, ROW_C1 = 0, 1
TRA_ROWS = (2, 3, 4)
FIRST_REGISTER = 5


class NetlistError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


@dataclass(frozen=True)
class Ref:
    """A whole named vector (``bit is None``), one bit of it, or a constant."""
    name: str
    bit: Optional[int] = None

    def __str__(self):
        return self.name if self.bit is None else f"{self.name}[{self.bit}]"


CONST0, CONST1 = Ref("0"), Ref("1")


@dataclass(frozen=True)
class Gate:
    name: str
    op: str
    args: tuple


@dataclass
class GateCircuit:
    inputs: dict = field(default_factory=dict)   # name -> width, declaration order
    gates: list = field(default_factory=list)
    outputs: list = field(default_factory=list)  # refs, little-endian concatenation
    widths: dict = field(default_factory=dict)

    def width_of(self, ref: Ref, line: Optional[int] = None) -> int:
        if ref.name in ("0", "1"):
            return 1
        if ref.name not in self.widths:
            raise NetlistError(f"reference to undefined signal {ref.name!r}", line)
        w = self.widths[ref.name]
        if ref.bit is None:
            return w
        if not 0 <= ref.bit < w:
            raise NetlistError(f"bit {ref.bit} out of range for {ref.name!r} of width {w}", line)
        return 1

    def add_input(self, name: str, width: int, line: Optional[int] = None) -> None:
        self._declare(name, width, line)
        self.inputs[name] = width

    def add_gate(self, name: str, op: str, args, line: Optional[int] = None) -> None:
        op = op.upper()
        if op not in GATE_ARITY:
            raise NetlistError(f"unknown gate {op!r}", line)
        args = tuple(args)
        if len(args) != GATE_ARITY[op]:
            raise NetlistError(f"{op} takes {GATE_ARITY[op]} operands, got {len(args)}", line)
        ws = [self.width_of(a, line) for a in args]
        wide = {w for w in ws if w != 1}
        if len(wide) > 1:
            raise NetlistError(f"operand widths differ: {ws}", line)
        self._declare(name, wide.pop() if wide else 1, line)
        self.gates.append(Gate(name, op, args))

    def add_output(self, ref: Ref, line: Optional[int] = None) -> None:
        self.width_of(ref, line)
        self.outputs.append(ref)

    def _declare(self, name: str, width: int, line) -> None:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise NetlistError(f"bad signal name {name!r}", line)
        if name in self.widths:
            raise NetlistError(f"signal {name!r} defined twice", line)
        if width < 1:
            raise NetlistError("width ≥ 1 violated", line)
        self.widths[name] = width

    @property
    def output_width(self) -> int:
        return sum(self.width_of(r) for r in self.outputs)


_REF = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*|[01])(?:\[(\d+)\])?$")


def parse_ref(tok: str, line: Optional[int] = None) -> Ref:
    m = _REF.match(tok)
    if not m:
        raise NetlistError(f"bad operand {tok!r}", line)
    name, bit = m.group(1), m.group(2)
    if name in ("0", "1") and bit is not None:
        raise NetlistError("constants take no bit index", line)
    return Ref(name, None if bit is None else int(bit))


def parse_netlist(text: str) -> GateCircuit:
    """Read ``input NAME WIDTH`` / ``gate NAME OP ARGS...`` / ``output REF`` lines."""
    c = GateCircuit()
    for no, raw in enumerate(text.splitlines(), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        kw = toks[0].lower()
        if kw == "input":
            if len(toks) not in (2, 3):
                raise NetlistError("expected: input NAME [WIDTH]", no)
            try:
                width = int(toks[2]) if len(toks) == 3 else 1
            except ValueError:
                raise NetlistError(f"bad width {toks[2]!r}", no) from None
            c.add_input(toks[1], width, no)
        elif kw == "gate":
            if len(toks) < 3:
                raise NetlistError("expected: gate NAME OP OPERANDS...", no)
            c.add_gate(toks[1], toks[2], [parse_ref(t, no) for t in toks[3:]], no)
        elif kw == "output":
            if len(toks) < 2:
                raise NetlistError("expected: output REF...", no)
            for t in toks[1:]:
                c.add_output(parse_ref(t, no), no)
        else:
            raise NetlistError(f"unknown directive {toks[0]!r}", no)
    if not c.outputs:
        raise NetlistError("circuit declares no outputs")
    return c


def load_netlist(path) -> GateCircuit:
    with open(path, encoding="utf-8") as fh:
        return parse_netlist(fh.read())


def ripple_adder(bits: int = 8) -> GateCircuit:
    """Unsigned adder of two ``bits``-wide operands; output is bits+1 wide."""
    c = GateCircuit()
    c.add_input("a", bits)
    c.add_input("b", bits)
    carry = CONST0
    for i in range(bits):
        a, b = Ref("a", i), Ref("b", i)
        c.add_gate(f"x{i}", "XOR", (a, b))
        c.add_gate(f"s{i}", "XOR", (Ref(f"x{i}"), carry))
        c.add_gate(f"g{i}", "AND", (a, b))
        c.add_gate(f"p{i}", "AND", (Ref(f"x{i}"), carry))
        c.add_gate(f"c{i}", "OR", (Ref(f"g{i}"), Ref(f"p{i}")))
        carry = Ref(f"c{i}")
    for i in range(bits):
        c.add_output(Ref(f"s{i}"))
    c.add_output(carry)
    return c


# ---------------------------------------------------------------- oracle

def evaluate(circuit: GateCircuit, operands: dict) -> np.ndarray:
    """Direct gate-level evaluation on host integers, one result per lane."""
    lanes = None
    vals: dict = {}
    for name, w in circuit.inputs.items():
        v = np.asarray(operands[name], dtype=np.uint64)
        lanes = v.size if lanes is None else lanes
        if v.size != lanes:
            raise ValueError("operands have different lane counts")
        vals[name] = (v, w)
    lanes = lanes or 0

    def get(ref: Ref):
        if ref.name in ("0", "1"):
            return np.full(lanes, int(ref.name), dtype=np.uint64), 1
        v, w = vals[ref.name]
        if ref.bit is None:
            return v, w
        return (v >> np.uint64(ref.bit)) & np.uint64(1), 1

    for g in circuit.gates:
        args = [get(a) for a in g.args]
        w = max(a[1] for a in args)
        mask = np.uint64((1 << w) - 1) if w < 64 else np.uint64(-1)
        # one-bit operands broadcast across all bits of a wide gate
        xs = [a if aw == w else (np.uint64(0) - a) & mask for a, aw in args]
        if g.op == "AND":
            r = xs[0] & xs[1]
        elif g.op == "OR":
            r = xs[0] | xs[1]
        elif g.op == "NAND":
            r = ~(xs[0] & xs[1])
        elif g.op == "NOR":
            r = ~(xs[0] | xs[1])
        elif g.op == "XOR":
            r = xs[0] ^ xs[1]
        elif g.op == "NOT":
            r = ~xs[0]
        elif g.op == "BUF":
            r = xs[0]
        else:
            r = (xs[0] & xs[1]) | (xs[0] & xs[2]) | (xs[1] & xs[2])
        vals[g.name] = (r & mask, w)

    out = np.zeros(lanes, dtype=np.uint64)
    shift = 0
    for ref in circuit.outputs:
        v, w = get(ref)
        out |= v << np.uint64(shift)
        shift += w
    return out


# ---------------------------------------------------------------- lowering

class _Graph:
    """Hash-consed majority/NOT graph over single bits."""

    def __init__(self):
        self.nodes: list[tuple] = []
        self.index: dict = {}
        self.c0 = self.add(("CONST", 0))
        self.c1 = self.add(("CONST", 1))

    def add(self, node: tuple) -> int:
        if node in self.index:
            return self.index[node]
        self.nodes.append(node)
        self.index[node] = len(self.nodes) - 1
        return self.index[node]

    def inv(self, x: int) -> int:
        n = self.nodes[x]
        if n[0] == "NOT":
            return n[1]
        if n[0] == "CONST":
            return self.c1 if n[1] == 0 else self.c0
        return self.add(("NOT", x))

    def maj(self, a: int, b: int, c: int) -> int:
        a, b, c = sorted((a, b, c))
        if a == b or a == c:
            return a
        if b == c:
            return b
        return self.add(("MAJ", a, b, c))

    def gate(self, op: str, xs: list) -> int:
        if op == "AND":
            return self.maj(xs[0], xs[1], self.c0)
        if op == "OR":
            return self.maj(xs[0], xs[1], self.c1)
        if op == "NAND":
            return self.inv(self.gate("AND", xs))
        if op == "NOR":
            return self.inv(self.gate("OR", xs))
        if op == "XOR":
            return self.gate("AND", [self.gate("OR", xs), self.gate("NAND", xs)])
        if op == "NOT":
            return self.inv(xs[0])
        if op == "BUF":
            return xs[0]
        return self.maj(*xs)


def _lower(circuit: GateCircuit) -> tuple[_Graph, list[int]]:
    g = _Graph()
    bits: dict = {}
    for name, w in circuit.inputs.items():
        bits[name] = [g.add(("IN", name, i)) for i in range(w)]

    def resolve(ref: Ref, width: int) -> list[int]:
        if ref.name in ("0", "1"):
            return [g.c0 if ref.name == "0" else g.c1] * width
        v = bits[ref.name]
        if ref.bit is not None:
            return [v[ref.bit]] * width
        return v

    for gate in circuit.gates:
        w = circuit.widths[gate.name]
        cols = [resolve(a, w) for a in gate.args]
        bits[gate.name] = [g.gate(gate.op, [c[i] for c in cols]) for i in range(w)]
    outs: list[int] = []
    for ref in circuit.outputs:
        outs += resolve(ref, circuit.width_of(ref))
    return g, outs


# ---------------------------------------------------------------- programs

@dataclass
class Program:
    ops: list                       # MicroOps over subarray-local rows
    allocation: dict                # operand label -> row
    input_rows: dict                # input name -> rows, bit 0 first
    output_rows: list               # output bits, little-endian
    rows_used: int
    reads: list = field(default_factory=list)   # per op: ((row, value id), ...)
    writes: list = field(default_factory=list)  # per op: ((row, value id), ...)
    live_peak: int = 0
    timing: object = None

    @property
    def estimated_cycles(self) -> int:
        from ..geometry import TimingParams

        t = self.timing or TimingParams()
        return sum(op_cycles(op, t) for op in self.ops)

    def listing(self) -> str:
        head = [f"# rows used: {self.rows_used}"]
        for name, rows in self.input_rows.items():
            head.append(f"# input {name}: " + " ".join(f"r{r}" for r in rows))
        head.append("# output: " + " ".join(f"r{r}" for r in self.output_rows))
        return "\n".join(head + [str(op) for op in self.ops]) + "\n"

    def validate(self) -> None:
        """Replay the dataflow symbolically; every read must see the value
        the compiler intended, so no row is read after being clobbered."""
        content: dict = {}
        for name, rows in self.input_rows.items():
            for i, r in enumerate(rows):
                content[r] = ("IN", name, i)
        for k, (op, rd, wr) in enumerate(zip(self.ops, self.reads, self.writes)):
            for row, want in rd:
                if content.get(row) != want:
                    raise AssertionError(f"op {k} ({op}) reads r{row} holding "
                                         f"{content.get(row)!r}, expected {want!r}")
            for row, val in wr:
                content[row] = val


def compile_circuit(circuit: GateCircuit, rows_per_subarray: int = 512,
                    register_rows: int = 3, timing=None) -> Program:
    """Compile to micro-ops over one subarray of ``rows_per_subarray`` rows."""
    g, outs = _lower(circuit)
    names = lambda i: g.nodes[i] if g.nodes[i][0] in ("IN", "CONST") else ("V", i)  # noqa: E731

    row = FIRST_REGISTER + register_rows
    input_rows = {}
    home: dict = {g.c0: ROW_C0, g.c1: ROW_C1}
    for name, w in circuit.inputs.items():
        input_rows[name] = list(range(row, row + w))
        for i in range(w):
            home[g.index[("IN", name, i)]] = row + i
        row += w
    output_rows = list(range(row, row + len(outs)))
    row += len(outs)
    if row > rows_per_subarray:
        raise CapacityError(f"operands and outputs need {row} rows, subarray has {rows_per_subarray}")
    free_regs = list(range(FIRST_REGISTER, FIRST_REGISTER + register_rows))
    free_spill = list(range(row, rows_per_subarray))
    first_spill = row

    computed = [i for i, n in enumerate(g.nodes) if n[0] in ("MAJ", "NOT")]
    needed = set()
    stack = list(outs)
    while stack:
        x = stack.pop()
        if x in needed:
            continue
        needed.add(x)
        n = g.nodes[x]
        if n[0] == "MAJ":
            stack += n[1:]
        elif n[0] == "NOT":
            stack.append(n[1])
    computed = [i for i in computed if i in needed]
    order = {x: k for k, x in enumerate(computed)}
    end = len(computed)
    last_use: dict = {}
    for x in computed:
        for a in g.nodes[x][1:]:
            last_use[a] = order[x]
    out_first: dict = {}
    for pos, x in enumerate(outs):
        out_first.setdefault(x, output_rows[pos])
        last_use[x] = end
    uses_const = any(a in (g.c0, g.c1) for x in computed for a in g.nodes[x][1:]) or \
        any(x in (g.c0, g.c1) for x in outs)

    ops, reads, writes = [], [], []

    def emit(op: MicroOp, rd, wr):
        ops.append(op)
        reads.append(tuple(rd))
        writes.append(tuple(wr))

    if uses_const:
        emit(set_const(ROW_C0, 0), (), ((ROW_C0, ("CONST", 0)),))
        emit(set_const(ROW_C1, 1), (), ((ROW_C1, ("CONST", 1)),))

    live: dict = {}   # node -> row for computed values held in register/spill rows
    peak = 0
    for k, x in enumerate(computed):
        for v in [v for v in live if last_use.get(v, -1) < k]:
            r = live.pop(v)
            (free_regs if r < first_spill else free_spill).append(r)
        if x in out_first:
            dst = out_first[x]
        elif free_regs:
            dst = free_regs.pop(0)
        elif free_spill:
            dst = free_spill.pop(0)
        else:
            raise CapacityError(f"live-range peak of {len(live) + 1} values exceeds "
                                f"{register_rows} register rows plus {rows_per_subarray - first_spill} "
                                f"spill rows")
        if x not in out_first:
            live[x] = dst
        peak = max(peak, len(live))
        home[x] = dst
        n = g.nodes[x]
        if n[0] == "NOT":
            src = home[n[1]]
            emit(not_op(src, dst), ((src, names(n[1])),), ((dst, names(x)),))
        else:
            for t, a in zip(TRA_ROWS, n[1:]):
                emit(rowclone(home[a], t), ((home[a], names(a)),), ((t, names(a)),))
            emit(tra_maj(*TRA_ROWS), tuple((t, names(a)) for t, a in zip(TRA_ROWS, n[1:])),
                 tuple((t, names(x)) for t in TRA_ROWS))
            emit(rowclone(TRA_ROWS[0], dst), ((TRA_ROWS[0], names(x)),), ((dst, names(x)),))

    for pos, x in enumerate(outs):
        dst = output_rows[pos]
        if home.get(x) != dst:
            emit(rowclone(home[x], dst), ((home[x], names(x)),), ((dst, names(x)),))

    allocation = {"C0": ROW_C0, "C1": ROW_C1}
    for i, t in enumerate(TRA_ROWS):
        allocation[f"T{i}"] = t
    for name, rows in input_rows.items():
        for i, r in enumerate(rows):
            allocation[f"{name}[{i}]"] = r
    for i, r in enumerate(output_rows):
        allocation[f"out[{i}]"] = r
    used = max([r for op in ops for r in op.rows()] + output_rows + [row - 1]) + 1
    prog = Program(ops, allocation, input_rows, output_rows, used, reads, writes, peak, timing)
    prog.validate()
    return prog


def run_program(device, subarray: RowAddress, program: Program, operands: dict,
                noise: Optional[NoiseModel] = None, lanes: Optional[tuple] = None) -> np.ndarray:
    """Load operands in vertical layout, execute, and read back the outputs."""
    g = device.geometry
    if program.rows_used > g.rows_per_subarray:
        raise CapacityError(f"program needs {program.rows_used} rows, subarray has {g.rows_per_subarray}")
    cols = g.columns_per_row
    lo, hi = (0, cols) if lanes is None else lanes
    base = g.row_index(subarray.with_row(0))
    n = None
    for name, rows in program.input_rows.items():
        vals = np.asarray(operands[name], dtype=np.uint64)
        n = vals.size if n is None else n
        if vals.size != n:
            raise ValueError("operands have different lane counts")
        planes = transpose_in(vals, len(rows), columns=hi - lo)
        for i, r in enumerate(rows):
            device.data[base + r, lo:hi] = planes[i]
            device.reference[base + r, lo:hi] = planes[i]
    for op in program.ops:
        exec_microop(device, op, noise, subarray=subarray, lanes=lanes)
    rows = device.data[[base + r for r in program.output_rows], lo:hi]
    out = transpose_out(rows)
    return out if n is None else out[:n]
