"""Processing using DRAM: in-subarray micro-ops, a circuit compiler, and a TRNG."""

from .circuit import (GateCircuit, NetlistError, Program, Ref, compile_circuit, evaluate,
                      load_netlist, parse_netlist, ripple_adder, run_program)
from .layout import CapacityError, transpose_in, transpose_out
from .ops import (MicroOp, NoiseModel, PudError, exec_microop, multi_copy, multi_input, not_op,
                  rowclone, set_const, simul_act, success_rates, tra_maj)
from .trng import TrngModel, TrngResult, monobit, quac_trng, runs_test

__all__ = [
    "CapacityError", "GateCircuit", "MicroOp", "NetlistError", "NoiseModel", "Program", "PudError",
    "Ref", "TrngModel", "TrngResult", "compile_circuit", "evaluate", "exec_microop", "load_netlist",
    "monobit", "multi_copy", "multi_input", "not_op", "parse_netlist", "quac_trng", "ripple_adder",
    "rowclone", "run_program", "runs_test", "set_const", "simul_act", "success_rates", "transpose_in",
    "transpose_out", "tra_maj",
]
