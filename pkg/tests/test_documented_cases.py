"""Documented input/output cases for each module, one test per case group."""
import math

import numpy as np
import pytest

from memcentric import (AddressError, Command, CommandKind, DisturbanceProfile, DramGeometry,
                        MitigationConfig, ResponseKind, RowAddress, TimingParams, new_device)
from memcentric import _kernels as K
from memcentric.disturbance import measure_acmin, press_weight, sample_acmin
from memcentric.harness import parse_config, plan_attack, run
from memcentric.harness.config import AttackSection
from memcentric.pnm import (KernelDescriptor, UnitSpec, papi_schedule, roofline_time,
                            scaling_curve)
from memcentric.pud import NoiseModel, exec_microop, rowclone, success_rates, transpose_in, transpose_out
from memcentric.smd import (MaintenanceTask, MemoryController, Region, SmdConfig, smd_begin,
                            smd_filter, smd_plan)

from .conftest import act, fixed_device, pair, small_geometry


# ---------------------------------------------------------------- dram core

def test_fresh_device_shape():
    g = DramGeometry(1, 1, 1, 2, 64, 256)
    dev = new_device(g, seed=7)
    assert dev.data.shape == (128, 256) and not dev.data.any()
    assert all(dev.row_state(g.address(i)).status == "closed" for i in range(128))
    assert dev == new_device(g, seed=7)


def test_open_time_feeds_press_weight():
    dev = fixed_device(1e9)
    t = dev.timing
    pair(dev, RowAddress(row=20), hold=t.tRAS + 100)
    assert dev.acc[21] == pytest.approx(((t.tRAS + 100) / t.tRAS) ** (2 / 3))


def test_backdoor_and_protocol_agree(geom, rng):
    dev = new_device(geom)
    a = RowAddress(row=3)
    bits = rng.integers(0, 2, geom.columns_per_row, dtype=np.uint8)
    dev.poke_row(a, bits)
    assert np.array_equal(dev.peek_row(a), bits)
    act(dev, a)
    assert np.array_equal(dev.issue(Command(CommandKind.RD, a)).data, bits)
    with pytest.raises(AddressError):
        dev.peek_row(RowAddress(row=geom.rows_per_subarray))


# ---------------------------------------------------------------- disturbance

def test_acmin_sampling_cases():
    prof = DisturbanceProfile()
    draws = sample_acmin(prof, np.random.default_rng(0), 10_000)
    assert 3000 <= np.median(draws) <= 5500 and (draws > 0).all()
    flat = DisturbanceProfile(acmin_log_sigma=0.0)
    assert (sample_acmin(flat, np.random.default_rng(0), 100) == math.exp(flat.acmin_log_mean)).all()


def test_press_disabled_and_vrd_degenerate():
    t = TimingParams()
    assert press_weight(5000 * t.tRAS, DisturbanceProfile(press_alpha=0.0), t) == 1.0
    dev = new_device(small_geometry(), seed=3, profile=DisturbanceProfile(vrd_ratio_max=1.0))
    dev.refresh_rows(np.arange(64))
    assert np.array_equal(dev.acmin_current, dev.acmin_base)


def test_threshold_at_one_thousand():
    dev = fixed_device(1000)
    dev.hammer(np.full(999, 20))
    assert not dev.events
    dev.hammer(np.full(1, 20))
    assert sorted(e.victim.row for e in dev.events) == [19, 21]
    pressed = fixed_device(1000)
    assert measure_acmin(pressed, RowAddress(row=20), hold=1000 * pressed.timing.tRAS) == 10


def test_refresh_before_threshold_prevents_flips():
    dev = fixed_device(100)
    for _ in range(50):
        dev.hammer(np.full(99, 20))
        dev.refresh_rows(np.arange(18, 23), cycle=dev.cycle)
    assert not dev.events


def test_measure_acmin_cases():
    assert measure_acmin(fixed_device(1500), RowAddress(row=20)) == 1500
    dev = new_device(small_geometry(), profile=DisturbanceProfile(enabled=False))
    assert measure_acmin(dev, RowAddress(row=20), cap=10_000) is None  # exceeds cap
    vrd = fixed_device(2000, vrd=3.5, seed=4)
    obs = [measure_acmin(vrd, RowAddress(row=20)) for _ in range(200)]
    assert len(set(obs)) > 10 and max(obs) / min(obs) <= 3.5


# ---------------------------------------------------------------- mitigation

def test_para_mean_gap_between_refreshes():
    dev = fixed_device(1e12, mitigation=MitigationConfig.para(0.001), seed=11)
    dev.hammer(np.full(1_000_000, 20))
    gap = 1_000_000 / dev.stats[K.ST_PARA]
    assert 950 <= gap <= 1050


def test_prac_alert_at_threshold_and_chip_wide_block():
    dev = fixed_device(1e9, banks=2, mitigation=MitigationConfig.prac(32, recovery_cycles=500))
    other = RowAddress(bank=1, row=3)
    act(dev, other)
    a = RowAddress(row=20)
    kinds = [pair(dev, a).kind for _ in range(32)]
    assert kinds[:31] == [ResponseKind.OK] * 31 and kinds[31] is ResponseKind.ALERT
    rd = dev.issue(Command(CommandKind.RD, other, issue_cycle=dev.cycle))
    assert rd.rejected
    ok = dev.issue(Command(CommandKind.RD, other, issue_cycle=rd.retry_at))
    assert ok.kind is ResponseKind.DATA


def test_trr_single_aggressor_always_tracked():
    t = TimingParams(tREFI=1989, tREFW=1989 * 64)
    dev = fixed_device(200, mitigation=MitigationConfig.trr(1), timing=t)
    for _ in range(300):
        dev.hammer(np.full(50, 20))
        dev.issue(Command(CommandKind.REF, issue_cycle=dev.cycle))
    assert not [e for e in dev.events if e.victim.row in (19, 21)]


def test_trr_idle_window_refreshes_nothing():
    dev = fixed_device(200, mitigation=MitigationConfig.trr(2))
    dev.issue(Command(CommandKind.REF))
    assert dev.counters["trr_refreshes"] == 0


def test_refresh_window_contract():
    t = TimingParams(tREFI=100, tREFW=3200)
    dev = new_device(small_geometry(rows=64, subarrays=2), t)
    from memcentric.mitigation import refresh_tick

    refresh_tick(dev, 2 * t.tREFW)
    now = dev.cycle
    assert (now - dev.last_refresh <= t.tREFW).all()


def test_doubling_refresh_rate_halves_attacker_budget():
    g = DramGeometry(1, 1, 1, 1, 64, 64)
    sec = AttackSection(pattern="single", victim_row=20)
    slow = plan_attack(sec, g, TimingParams(tREFI=3978, tREFW=3978 * 64))
    fast = plan_attack(sec, g, TimingParams(tREFI=1989, tREFW=1989 * 64))
    # each window also spends one tRC on the REF itself, hence the one-pair slack
    assert abs(slow.pairs_per_window - 2 * fast.pairs_per_window) <= 1
    for timing, plan in ((TimingParams(tREFI=3978, tREFW=3978 * 64), slow),
                         (TimingParams(tREFI=1989, tREFW=1989 * 64), fast)):
        dev = fixed_device(10_000, timing=timing)
        dev.hammer(plan.window())
        assert dev.acc[plan.victim] == plan.pairs_per_window


def test_no_refresh_means_eventual_flip():
    dev = fixed_device(30_000)
    dev.hammer(np.full(30_000, 20))
    assert dev.events


# ---------------------------------------------------------------- smd

T = TimingParams(tREFI=1000, tREFW=64_000)


def _smd(**kw):
    return new_device(small_geometry(rows=16, subarrays=4, banks=2), T, 1,
                      smd_config=SmdConfig(enabled=True, **kw))


def test_one_period_of_refresh_tasks_covers_every_row_once():
    dev = _smd()
    seen = []
    for cycle in range(0, T.tREFW, 500):
        for task in smd_plan(dev, cycle):
            seen.extend(task.region.rows(dev.geometry))
            dev.smd.busy[dev.smd._sub_index(task.region)] = False
            dev.smd.refresh_due[dev.smd._sub_index(task.region)] += T.tREFW
    assert sorted(seen) == list(range(dev.geometry.n_rows))
    assert smd_plan(new_device(small_geometry()), 0) == []


def test_hot_counter_triggers_mitigation_plan():
    dev = _smd(rh_threshold=100, rh_margin=0.9)
    dev.act_counter[dev.index(RowAddress(subarray=2, row=4))] = 90
    tasks = smd_plan(dev, 1)
    assert any(t.kind == "rh_mitigation" and t.region.path == (0, 0, 0, 2) for t in tasks)


def test_refresh_completion_updates_rows():
    dev = _smd(refresh_duration=100)
    dev.smd.tick(0)
    dev.smd.tick(200)
    assert (dev.last_refresh[:16] == 100).all()


def test_disjoint_tasks_overlap():
    dev = _smd()
    t1 = MaintenanceTask("refresh", Region("subarray", (0, 0, 0, 1)), 300, 0)
    t2 = MaintenanceTask("scrub", Region("subarray", (0, 0, 1, 3)), 300, 0)
    smd_begin(dev, t1, 0)
    smd_begin(dev, t2, 0)
    assert len(dev.smd.locks.locks) == 2
    assert act(dev, RowAddress(subarray=1)).kind is ResponseKind.NACK
    assert act(dev, RowAddress(subarray=2)).kind is ResponseKind.OK


def test_disabled_smd_passes_everything():
    dev = new_device(small_geometry())
    assert smd_filter(dev, Command(CommandKind.ACT, RowAddress(row=1))) is None


def test_retry_lands_within_lock_plus_backoff():
    dev = _smd(refresh_duration=100)
    dev.smd.tick(0)
    ctrl = MemoryController(dev, backoff=20)
    first = dev.issue(Command(CommandKind.ACT, RowAddress(row=1)))
    assert first.kind is ResponseKind.NACK
    ok = ctrl.submit(Command(CommandKind.ACT, RowAddress(row=1), issue_cycle=first.completion_cycle))
    assert ok.completion_cycle - dev.timing.tRCD <= first.completion_cycle + 120


def test_no_locks_no_retries():
    dev = new_device(small_geometry())
    ctrl = MemoryController(dev)
    for r in range(10):
        ctrl.submit(Command(CommandKind.ACT, RowAddress(row=r), issue_cycle=dev.cycle))
        ctrl.submit(Command(CommandKind.PRE, RowAddress(row=r), issue_cycle=dev.cycle))
    assert ctrl.total_retries == 0


# ---------------------------------------------------------------- pud

def test_copy_success_interval():
    dev = new_device(small_geometry(rows=16, columns=1000), seed=2,
                     profile=DisturbanceProfile(enabled=False))
    for _ in range(1000):
        exec_microop(dev, rowclone(0, 1), NoiseModel(enabled=True), subarray=RowAddress())
    assert 0.9996 <= success_rates(dev)["copy"] <= 0.99995


def test_byte_round_trip(rng):
    v = rng.integers(0, 256, 1024)
    assert np.array_equal(transpose_out(transpose_in(v, 8)), v)


# ---------------------------------------------------------------- pnm

def test_roofline_documented_numbers():
    k = KernelDescriptor("k", 1e9, 1e9, resident_unit="u")
    u = UnitSpec("u", "FC_PIM", 1e12, 1e11, 1e12, 1e10)
    assert roofline_time(k, u) == pytest.approx(10e-3)
    assert roofline_time(k, UnitSpec("u", "FC_PIM", 1e12, 1e12, 1e12, 1e10)) == pytest.approx(1e-3)
    moved = KernelDescriptor("k", 1e9, 1e9)
    assert roofline_time(moved, u) == pytest.approx(110e-3)


def test_single_unit_takes_everything():
    u = UnitSpec("only", "PU", 1, 1, 1e30, 1)
    for ai in (0.01, 1000):
        assert papi_schedule([KernelDescriptor("k", ai * 1e6, 1e6)], [u]).assignment == {"k": "only"}


def test_scaling_documented_numbers():
    u = UnitSpec("u", "FC_PIM", 1e15, 1e11, 1e12, 1e11)  # link equals one unit's bandwidth
    k = KernelDescriptor("k", 1e10, 1e10)
    assert scaling_curve(u, k, [1, 8])[1].ratio == 8.0
    fed = scaling_curve(u, k, 10, host_fed=True)
    assert fed[0].ratio == 1 and all(abs(p.ratio - 1) <= 0.01 for p in fed)


# ---------------------------------------------------------------- harness

def test_attack_rowpress_versus_hammer_ratio():
    rep = run(parse_config("builtin:rowpress_sweep"), "sweep")
    col = rep.main.columns.index("first_flip_activation")
    plain, pressed = (r[col] for r in rep.main.rows)
    assert plain / pressed >= 10


def test_attack_double_sided_prac_no_flips():
    assert run(parse_config("builtin:attack_double_prac"), "attack").summary["flips"] == 0


def test_pud_adder_success_one():
    s = run(parse_config("builtin:pud_adder8"), "pud").summary
    assert s["mismatches"] == 0 and s["logic_success_rate"] == 1.0 and s["lane_success_rate"] == 1.0
