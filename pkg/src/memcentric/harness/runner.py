"""Subcommand drivers: each turns an ExperimentConfig into a MetricsReport."""

from __future__ import annotations

import copy
import csv
import hashlib
import itertools
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from .. import _kernels as K
from ..dram import Device, new_device
from ..geometry import ConfigError, RowAddress
from ..mitigation import RefreshScheduler
from ..pnm import (KernelDescriptor, UnitSpec, default_unit_set, papi_schedule, scaling_curve)
from ..pud import compile_circuit, evaluate, load_netlist, run_program, success_rates
from ..pud.ops import SIMUL_ACT_ROWS, pud_stats
from ..pud.trng import TrngModel, monobit, quac_trng, runs_test
from ..smd import MemoryController
from .attacks import plan_attack, run_attack
from .config import SUBCOMMANDS, ExperimentConfig, build_config, set_path
from .report import MetricsReport, Table
from .trace import read_trace, uniform_workload


def build_device(cfg: ExperimentConfig) -> Device:
    dev = new_device(cfg.geometry, cfg.timing, cfg.seed, cfg.profile, cfg.mitigation, cfg.smd)
    if cfg.disturbance.enabled and cfg.disturbance.acmin_fixed is not None:
        dev.acmin_base[:] = cfg.disturbance.acmin_fixed
        dev.acmin_current[:] = cfg.disturbance.acmin_fixed
    return dev


def _aux_rng(cfg: ExperimentConfig, purpose: int) -> np.random.Generator:
    # separate from the device streams so workloads do not perturb them
    return np.random.default_rng([cfg.seed, purpose])


def _mitigation_summary(dev: Device) -> dict:
    return {
        "activations": int(dev.stats[K.ST_ACTS]),
        "bitflips": len(dev.events),
        "rowhammer_flips": sum(e.cause == "rowhammer" for e in dev.events),
        "rowpress_flips": sum(e.cause == "rowpress_amplified" for e in dev.events),
        "victims": len({e.victim for e in dev.events}),
        "para_refreshes": int(dev.stats[K.ST_PARA]),
        "alerts": int(dev.stats[K.ST_ALERTS]),
        "prac_victim_refreshes": int(dev.stats[K.ST_PRAC_VICTIMS]),
        "trr_refreshes": dev.counters["trr_refreshes"],
        "refreshes": dev.counters["refreshes"],
        "alert_rejections": dev.counters["alert_rejections"],
        "nacks": dev.counters["nacks"],
    }


def _events_table(dev: Device) -> Table:
    t = Table(["cycle", "victim", "cause", "bits"])
    for e in dev.events:
        t.add(e.cycle, str(e.victim), e.cause, " ".join(map(str, e.bit_positions)))
    return t


def data_digest(dev: Device) -> str:
    return hashlib.sha256(np.ascontiguousarray(dev.data).tobytes()).hexdigest()[:16]


def _bucket(lat: int) -> tuple[int, int]:
    if lat <= 0:
        return 0, 0
    hi = 1 << (int(lat) - 1).bit_length()
    return hi // 2 + 1 if hi > 1 else 1, hi


# ---------------------------------------------------------------- simulate

def run_simulate(cfg: ExperimentConfig) -> MetricsReport:
    dev = build_device(cfg)
    wl = cfg.workload
    if wl.trace is not None:
        records = read_trace(cfg.resolve(wl.trace), cfg.geometry)
    else:
        s = wl.synthetic
        if s.kind != "uniform":
            raise ConfigError("workload.synthetic.kind must be 'uniform'")
        records = uniform_workload(cfg.geometry, _aux_rng(cfg, 1), s.requests, s.banks,
                                   s.interval, s.write_fraction, s.subarrays)
    ctrl = MemoryController(dev)
    sched = RefreshScheduler(dev, enabled=cfg.host_refresh)
    cols = cfg.geometry.columns_per_row
    main = Table(["index", "cycle", "op", "address", "completion", "latency", "retries", "response"])
    hist: Counter = Counter()
    for k, rec in enumerate(records):
        if not (dev.open_row >= 0).any():
            sched.tick(max(rec.cycle, dev.cycle))
        resp = ctrl.submit(rec.command(cols))
        lat = resp.completion_cycle - rec.cycle
        retries = ctrl.records[-1].retries
        main.add(k, rec.cycle, rec.op.value, str(rec.addr), resp.completion_cycle, lat, retries,
                 resp.kind.value)
        hist[_bucket(lat)] += 1
    h = Table(["latency_lo", "latency_hi", "count"])
    for (lo, hi), n in sorted(hist.items()):
        h.add(lo, hi, n)
    summary = {"total_cycles": dev.cycle, "commands": len(records),
               "retries": ctrl.total_retries}
    summary.update(_mitigation_summary(dev))
    if dev.smd is not None:
        st = dev.smd.stats
        summary.update({f"smd_{k}": st[k] for k in ("completed_refresh", "completed_rh_mitigation",
                                                     "completed_scrub", "scrub_detections")})
    summary["data_digest"] = data_digest(dev)
    return MetricsReport("simulate", cfg.seed, main, {"latency_hist": h, "events": _events_table(dev)},
                         summary)


# ---------------------------------------------------------------- attack

def run_attack_cmd(cfg: ExperimentConfig) -> MetricsReport:
    dev = build_device(cfg)
    a = cfg.attack
    plan = plan_attack(a, cfg.geometry, cfg.timing)
    res = run_attack(dev, plan, a.activations, a.refresh, a.stop_on_first_flip)
    cols = ["pattern", "mitigation", "aggressors", "hold", "pairs_per_window", "windows",
            "activations", "flips", "first_flip_activation", "first_flip_cycle", "cycles"]
    main = Table(cols)
    main.add(plan.pattern, cfg.mitigation.kind, len(plan.aggressors), plan.hold,
             plan.pairs_per_window, res.windows, res.activations, res.flips,
             res.first_flip_activation, res.first_flip_cycle, dev.cycle)
    summary = dict(zip(cols, main.rows[0]))
    summary.update(_mitigation_summary(dev))
    return MetricsReport("attack", cfg.seed, main, {"events": _events_table(dev)}, summary)


# ---------------------------------------------------------------- pud

def _load_operands(cfg: ExperimentConfig, circuit) -> dict:
    p = cfg.pud
    ops = p.operands
    if ops is None:
        rng = _aux_rng(cfg, 2)
        return {n: rng.integers(0, 1 << w, p.lanes, dtype=np.uint64) if w < 64
                else rng.integers(0, 2**63, p.lanes, dtype=np.uint64)
                for n, w in circuit.inputs.items()}
    if isinstance(ops, str):
        path = cfg.resolve(ops)
        try:
            with open(path, encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                rows = list(reader)
        except OSError as e:
            raise ConfigError(f"pud.operands: cannot read {path}: {e.strerror}") from None
        ops = {n: [int(r[n], 0) for r in rows] for n in (reader.fieldnames or [])}
    if not isinstance(ops, dict):
        raise ConfigError("pud.operands must be a mapping, a CSV path, or null")
    missing = [n for n in circuit.inputs if n not in ops]
    if missing:
        raise ConfigError(f"pud.operands lacks inputs {missing}")
    return {n: np.asarray(ops[n], dtype=np.uint64) for n in circuit.inputs}


def run_pud(cfg: ExperimentConfig) -> MetricsReport:
    p = cfg.pud
    circuit = load_netlist(cfg.resolve(p.netlist))
    prog = compile_circuit(circuit, cfg.geometry.rows_per_subarray, p.register_rows, cfg.timing)
    operands = _load_operands(cfg, circuit)
    dev = build_device(cfg)
    sub = RowAddress(0, 0, p.bank, p.subarray, 0)
    cfg.geometry.check(sub)
    got = run_program(dev, sub, prog, operands, cfg.noise)
    want = evaluate(circuit, operands)
    names = list(circuit.inputs)
    main = Table(["lane"] + names + ["result", "expected", "match"])
    for j in range(got.size):
        main.add(j, *(int(operands[n][j]) for n in names), int(got[j]), int(want[j]),
                 bool(got[j] == want[j]))
    rates = success_rates(dev)
    st = pud_stats(dev)
    summary = {"lanes": int(got.size), "mismatches": int((got != want).sum()),
               "lane_success_rate": float((got == want).mean()) if got.size else 1.0,
               "program_ops": len(prog.ops), "rows_used": prog.rows_used,
               "live_peak": prog.live_peak, "estimated_cycles": prog.estimated_cycles}
    for cls in ("copy", "logic", "not"):
        summary[f"{cls}_success_rate"] = rates.get(cls, 1.0)
    for kind in ("ROWCLONE", "TRA_MAJ", "NOT", "SET_CONST"):
        summary[f"ops_{kind.lower()}"] = st[kind]
    listing = Table(["step", "micro_op"])
    for i, op in enumerate(prog.ops):
        listing.add(i, str(op))
    return MetricsReport("pud", cfg.seed, main, {"program": listing}, summary)


# ---------------------------------------------------------------- trng

def run_trng(cfg: ExperimentConfig) -> MetricsReport:
    t = cfg.trng
    dev = build_device(cfg)
    model = TrngModel()
    sub = RowAddress(0, 0, t.bank, t.subarray, 0)
    cfg.geometry.check(sub)
    res = quac_trng(dev, t.n_rows, t.n_bits, sub, model)
    bias, p_mono = monobit(res.bits) if res.bits.size else (0.0, 1.0)
    p_runs = runs_test(res.bits) if res.bits.size else 1.0
    cols = ["n_rows", "n_bits", "ones", "bias", "monobit_p", "runs_p", "throughput_gbps", "ops"]
    main = Table(cols)
    main.add(t.n_rows, int(res.bits.size), int(res.bits.sum()), bias, p_mono, p_runs,
             res.throughput_gbps, res.ops)
    model_t = Table(["n_rows", "throughput_gbps", "relative_to_4"])
    for n in SIMUL_ACT_ROWS:
        model_t.add(n, model.throughput_gbps(n), model.throughput_gbps(n) / model.throughput_gbps(4))
    summary = dict(zip(cols, main.rows[0]))
    summary["monobit_pass"] = bias < 0.005
    digest = hashlib.sha256(np.packbits(res.bits).tobytes()).hexdigest()[:16]
    summary["bits_digest"] = digest
    return MetricsReport("trng", cfg.seed, main, {"throughput_model": model_t}, summary)


# ---------------------------------------------------------------- pnm

DEFAULT_KERNELS = (
    {"name": "attention", "compute_ops": 0.5e9, "bytes_touched": 1e9, "resident_unit": "attn_pim"},
    {"name": "fc_batched", "compute_ops": 200e9, "bytes_touched": 1e9, "resident_unit": "fc_pim"},
)


def _build(cls, items, what):
    out = []
    for i, d in enumerate(items):
        if not isinstance(d, dict):
            raise ConfigError(f"pnm.{what}[{i}] must be a mapping")
        known = [f.name for f in fields(cls)]
        bad = [k for k in d if k not in known]
        if bad:
            raise ConfigError(f"pnm.{what}[{i}]: unknown key {bad[0]!r} (expected {known})")
        try:
            out.append(cls(**d))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"pnm.{what}[{i}]: {e}") from None
    return out


def run_pnm(cfg: ExperimentConfig) -> MetricsReport:
    p = cfg.pnm
    units = default_unit_set() if p.units is None else _build(UnitSpec, p.units, "units")
    kernels = _build(KernelDescriptor, p.kernels or DEFAULT_KERNELS, "kernels")
    place = papi_schedule(kernels, units, p.link_energy_per_byte)
    by_name = {u.name: u for u in units}
    main = Table(["kernel", "intensity", "unit", "unit_class", "time_s", "bound", "energy_j",
                  "bytes_moved"])
    for k in kernels:
        u = by_name[place.assignment[k.name]]
        moved = 0.0 if k.resident_unit == u.name else k.bytes_touched
        main.add(k.name, k.arithmetic_intensity, u.name, u.unit_class.value, place.times[k.name],
                 place.rationale[k.name], place.energy[k.name], moved)
    tables = {}
    summary = {"kernels": len(kernels), "makespan_s": place.makespan,
               "bytes_moved": place.bytes_moved, "energy_j": sum(place.energy.values())}
    sc = p.scaling
    if sc is not None:
        if sc.unit not in by_name:
            raise ConfigError(f"pnm.scaling.unit {sc.unit!r} is not a configured unit")
        kn = {k.name: k for k in kernels}
        name = sc.kernel or kernels[0].name
        if name not in kn:
            raise ConfigError(f"pnm.scaling.kernel {name!r} is not a configured kernel")
        if sc.n_max < 1:
            raise ConfigError("pnm.scaling.n_max ≥ 1 violated")
        curve = scaling_curve(by_name[sc.unit], kn[name], sc.n_max, sc.host_fed)
        t = Table(["n_units", "throughput", "ratio"])
        for pt in curve:
            t.add(pt.n_units, pt.throughput, pt.ratio)
        tables["scaling"] = t
        summary["scaling_max_ratio"] = curve[-1].ratio
    return MetricsReport("pnm", cfg.seed, main, tables, summary)


# ---------------------------------------------------------------- sweep

def sweep_points(cfg: ExperimentConfig) -> list[dict]:
    """Cartesian product in declaration order; the last key varies fastest."""
    params = cfg.sweep.params
    for k, v in params.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"sweep.params.{k} must be a non-empty list")
    keys = list(params)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(params[k] for k in keys))]


def _run_point(args) -> MetricsReport:
    raw, base_dir, sub, point = args
    raw = copy.deepcopy(raw)
    for k, v in point.items():
        set_path(raw, k.split("."), v, source=f"sweep.params.{k}")
    cfg = build_config(raw, "<sweep point>", base_dir=base_dir)
    return RUNNERS[sub](cfg)


def run_sweep(cfg: ExperimentConfig) -> MetricsReport:
    sub = cfg.sweep.subcommand
    points = sweep_points(cfg)
    raw = copy.deepcopy(cfg.raw)
    raw["seed"] = cfg.seed
    jobs = [(raw, cfg.base_dir, sub, pt) for pt in points]
    if cfg.sweep.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.sweep.workers) as pool:
            reports = list(pool.map(_run_point, jobs))  # map keeps point order
    else:
        reports = [_run_point(j) for j in jobs]
    keys = list(cfg.sweep.params)
    metric_cols: list = []
    for r in reports:
        for m in r.summary:
            if m not in metric_cols and m not in keys:
                metric_cols.append(m)
    main = Table(["point"] + keys + metric_cols)
    for i, (pt, r) in enumerate(zip(points, reports)):
        main.add(i, *(pt[k] for k in keys), *(r.summary.get(m) for m in metric_cols))
    return MetricsReport("sweep", cfg.seed, main, {}, {"points": len(points)})


RUNNERS = {
    "simulate": run_simulate,
    "attack": run_attack_cmd,
    "pud": run_pud,
    "trng": run_trng,
    "pnm": run_pnm,
    "sweep": run_sweep,
}


def run(cfg: ExperimentConfig, subcommand: str) -> MetricsReport:
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    return RUNNERS[subcommand](cfg).check()
