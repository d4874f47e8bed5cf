import numpy as np
import pytest

from memcentric import (Command, CommandKind, ConfigError, ProtocolError, ResponseKind, RowAddress,
                        TimingParams, new_device)
from memcentric.smd import (MemoryController, SmdConfig, StarvationError, mc_retry, smd_filter,
                            smd_plan)

from .conftest import act, pre, small_geometry

T = TimingParams(tREFI=1000, tREFW=64_000)


def smd_device(scope="subarray", subarrays=4, **kw):
    cfg = SmdConfig(enabled=True, lock_scope=scope, **kw)
    return new_device(small_geometry(rows=16, subarrays=subarrays, banks=2), T, 1, smd_config=cfg)


@pytest.mark.parametrize("kw", [dict(lock_scope="chip"), dict(refresh_duration=0),
                                dict(rh_margin=0), dict(rh_threshold=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SmdConfig(enabled=True, **kw).validate()


def test_refresh_due_times_are_staggered():
    dev = smd_device()
    n = dev.geometry.n_subarrays
    assert list(dev.smd.refresh_due) == [s * T.tREFW // n for s in range(n)]
    tasks = smd_plan(dev, 0)
    assert [t.kind for t in tasks] == ["refresh"] and tasks[0].region.path == (0, 0, 0, 0)


def test_locked_subarray_nacks_only_its_rows():
    dev = smd_device(refresh_duration=500)
    dev.smd.tick(0)  # subarray 0 refresh starts
    r = act(dev, RowAddress(subarray=0, row=3))
    assert r.kind is ResponseKind.NACK and str(r.region) == "subarray:0/0/0/0"
    assert act(dev, RowAddress(subarray=1, row=3)).kind is ResponseKind.OK


def test_rank_scope_blocks_everything():
    dev = smd_device("rank", refresh_duration=500)
    dev.smd.tick(0)
    r = act(dev, RowAddress(bank=1, subarray=3, row=3))
    assert r.kind is ResponseKind.NACK and r.region.scope == "rank"


def test_filter_and_retry_helpers():
    dev = smd_device(refresh_duration=500)
    dev.smd.tick(0)
    cmd = Command(CommandKind.ACT, RowAddress(row=1))
    assert smd_filter(dev, cmd) is not None
    assert smd_filter(dev, Command(CommandKind.ACT, RowAddress(subarray=2))) is None
    ctrl = MemoryController(dev)
    nack = dev.issue(cmd)
    again = mc_retry(ctrl, cmd, nack)
    assert again.issue_cycle == nack.completion_cycle - 1 + T.nack_retry_backoff


def test_controller_retries_until_lock_releases():
    dev = smd_device(refresh_duration=500)
    dev.smd.tick(0)
    ctrl = MemoryController(dev)
    r = ctrl.submit(Command(CommandKind.ACT, RowAddress(row=1)))
    assert r.kind is ResponseKind.OK and r.completion_cycle >= 500
    assert ctrl.total_retries > 0 and dev.counters["nacks"] == ctrl.total_retries


def test_starvation_raises():
    dev = smd_device(refresh_duration=5000, retry_cap=3)
    dev.smd.tick(0)
    with pytest.raises(StarvationError, match="retry cap"):
        MemoryController(dev).submit(Command(CommandKind.ACT, RowAddress(row=1)))


def test_maintenance_waits_for_open_row_and_drains():
    dev = smd_device(refresh_duration=200)
    due = int(dev.smd.refresh_due[1])
    dev.smd.tick(due - 100)
    a = RowAddress(subarray=1, row=2)
    assert act(dev, a, due - 50).kind is ResponseKind.OK  # host holds a row in subarray 1
    dev.smd.tick(due + 5)
    assert dev.smd.locks.find(dev.index(a)) is None and dev.smd.queue
    # new opens in the draining subarray are refused; other banks proceed
    assert act(dev, RowAddress(bank=1, subarray=1, row=1), due + 5).kind is ResponseKind.OK
    pre(dev, a, due + 10)
    dev.smd.tick(dev.cycle)
    assert dev.smd.locks.find(dev.index(a)) is not None


def test_scrub_restores_corrupted_rows():
    dev = smd_device(scrub_period=3000, scrub_duration=50)
    dev.data[5, 3] ^= 1
    dev.smd.tick(20_000)
    assert dev.smd.stats["scrub_detections"] >= 1
    assert np.array_equal(dev.data, dev.reference)


def test_chip_side_rowhammer_mitigation():
    dev = new_device(small_geometry(rows=16, subarrays=2), T, 1,
                     smd_config=SmdConfig(enabled=True, rh_threshold=20, rh_margin=0.5))
    ctrl = MemoryController(dev)
    a = RowAddress(subarray=1, row=5)
    for _ in range(30):
        ctrl.submit(Command(CommandKind.ACT, a, issue_cycle=dev.cycle))
        ctrl.submit(Command(CommandKind.PRE, a, issue_cycle=dev.cycle))
    dev.smd.tick(dev.cycle + 1000)
    assert dev.smd.stats["completed_rh_mitigation"] >= 1
    assert dev.act_counter[dev.index(a)] < 10


def test_locked_subarray_refuses_pud():
    from memcentric.pud import exec_microop, rowclone

    dev = smd_device(refresh_duration=500)
    dev.smd.tick(0)
    with pytest.raises(ProtocolError, match="SMD-locked"):
        exec_microop(dev, rowclone(0, 1), subarray=RowAddress())


def test_batch_path_refuses_smd():
    with pytest.raises(ProtocolError):
        smd_device().hammer(np.array([1]))


def _replay(dev, rng, n):
    ctrl = MemoryController(dev)
    g = dev.geometry
    for _ in range(n):
        a = g.address(int(rng.integers(g.n_rows)))
        ctrl.submit(Command(CommandKind.ACT, a, issue_cycle=dev.cycle))
        if rng.random() < 0.5:
            bits = rng.integers(0, 2, g.columns_per_row, dtype=np.uint8)
            ctrl.submit(Command(CommandKind.WR, a, bits))
        else:
            ctrl.submit(Command(CommandKind.RD, a))
        ctrl.submit(Command(CommandKind.PRE, a))
    return dev


@pytest.mark.parametrize("scope", ["subarray", "bank", "rank"])
def test_maintenance_never_changes_data(scope):
    gold = _replay(new_device(small_geometry(rows=16, subarrays=4, banks=2), T, 1),
                   np.random.default_rng(7), 3000)
    dev = _replay(smd_device(scope, refresh_duration=300), np.random.default_rng(7), 3000)
    assert np.array_equal(gold.data, dev.data)
    assert dev.smd.stats["completed_refresh"] > dev.geometry.n_subarrays
    assert dev.smd.stats["audit_violations"] == 0
    assert dev.cycle >= gold.cycle
