import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memcentric import (AddressError, Command, CommandKind, ConfigError, DisturbanceProfile,
                        DramGeometry, MitigationConfig, ProtocolError, ResponseKind, RowAddress,
                        TimingParams, new_device)
from memcentric.smd import MemoryController

from .conftest import act, pre, small_geometry


@given(st.integers(1, 2), st.integers(1, 2), st.integers(1, 4), st.integers(1, 4),
       st.integers(4, 32), st.data())
def test_row_index_round_trip(ch, rk, bk, sa, rows, data):
    g = DramGeometry(ch, rk, bk, sa, rows, 8)
    i = data.draw(st.integers(0, g.n_rows - 1))
    addr = g.address(i)
    assert g.row_index(addr) == i
    g.check(addr)


def test_geometry_rejects_bad_shapes():
    with pytest.raises(ConfigError, match="rows_per_subarray"):
        DramGeometry(rows_per_subarray=2)
    with pytest.raises(ConfigError):
        DramGeometry(banks_per_rank=0)


def test_timing_defaults_and_consistency():
    t = TimingParams()
    assert t.tRC == t.tRAS + t.tRP
    assert t.tREFW == 51_200_000  # 64 ms at 1.25 ns
    with pytest.raises(ConfigError, match="tRC"):
        TimingParams(tRC=10)
    with pytest.raises(ConfigError, match="tREFW"):
        TimingParams(tREFI=10)


def test_out_of_range_address(geom):
    dev = new_device(geom)
    with pytest.raises(AddressError):
        act(dev, RowAddress(row=geom.rows_per_subarray))


def test_write_read_round_trip(geom, rng):
    dev = new_device(geom, seed=3)
    a = RowAddress(row=5)
    bits = rng.integers(0, 2, geom.columns_per_row, dtype=np.uint8)
    act(dev, a)
    assert dev.issue(Command(CommandKind.WR, a, bits)).kind is ResponseKind.OK
    r = dev.issue(Command(CommandKind.RD, a))
    assert r.kind is ResponseKind.DATA and np.array_equal(r.data, bits)
    assert dev.row_state(a).status == "open"
    pre(dev, a)
    assert dev.row_state(a).status == "closed"
    assert np.array_equal(dev.peek_row(a), bits)


def test_protocol_errors(geom):
    dev = new_device(geom)
    a, b = RowAddress(row=1), RowAddress(row=2)
    with pytest.raises(ProtocolError, match="closed row"):
        dev.issue(Command(CommandKind.RD, a))
    act(dev, a)
    with pytest.raises(ProtocolError, match="open row"):
        act(dev, b)
    with pytest.raises(ProtocolError, match="payload"):
        Command(CommandKind.RD, a, np.zeros(64, dtype=np.uint8))


def test_timing_of_a_pair(geom):
    dev = new_device(geom)
    t = dev.timing
    a = RowAddress(row=1)
    assert act(dev, a).completion_cycle == t.tRCD
    # PRE cannot start before tRAS after the ACT
    assert pre(dev, a).completion_cycle == t.tRAS + t.tRP
    # next ACT to the bank waits for the precharge
    assert act(dev, a).completion_cycle == t.tRAS + t.tRP + t.tRCD


@given(st.lists(st.tuples(st.sampled_from(["ACT", "PRE", "RD", "REF"]), st.integers(0, 7),
                          st.integers(0, 50)), max_size=40))
def test_completion_cycles_strictly_increase(cmds):
    dev = new_device(small_geometry(rows=8), seed=1)
    last = -1
    for kind, row, gap in cmds:
        a = RowAddress(row=row)
        opened = dev.open_row[0]
        if kind == "RD" and opened != row:
            continue
        if kind == "ACT" and opened >= 0:
            continue
        if kind == "REF" and opened >= 0:
            continue
        r = dev.issue(Command(kind, a, issue_cycle=dev.cycle + gap))
        assert r.completion_cycle > last
        last = r.completion_cycle


def test_same_seed_same_state(geom):
    def run(seed):
        dev = new_device(geom, seed=seed, profile=DisturbanceProfile())
        dev.hammer(np.full(5000, 10))
        return dev
    assert run(4) == run(4)
    assert run(4) != run(5)


def _scalar_pairs(dev, rows, holds, ref_every):
    ctrl = MemoryController(dev)
    for k, (r, h) in enumerate(zip(rows, holds)):
        a = dev.geometry.address(int(r))
        ctrl.submit(Command(CommandKind.ACT, a, issue_cycle=dev.cycle))
        opened = int(dev.open_since[dev.bank_of(int(r))])
        dev.issue(Command(CommandKind.PRE, a, issue_cycle=opened + int(h)))
        if ref_every and (k + 1) % ref_every == 0:
            ctrl.submit(Command(CommandKind.REF, issue_cycle=dev.cycle))


def _batch_pairs(dev, rows, holds, ref_every):
    ctrl = MemoryController(dev)
    step = ref_every or len(rows)
    for s in range(0, len(rows), step):
        dev.hammer(rows[s:s + step], holds[s:s + step])
        if ref_every and s + step <= len(rows):
            ctrl.submit(Command(CommandKind.REF, issue_cycle=dev.cycle))


MITIGATIONS = [None, MitigationConfig.para(0.3), MitigationConfig.trr(2),
               MitigationConfig.prac(3, recovery_cycles=50)]


@pytest.mark.parametrize("mit", MITIGATIONS, ids=["none", "para", "trr", "prac"])
@given(seed=st.integers(0, 2**16), n=st.integers(1, 300), ref_every=st.sampled_from([0, 7, 40]),
       press=st.booleans())
def test_batch_path_matches_command_path(mit, seed, n, ref_every, press):
    g = small_geometry(rows=16, subarrays=2, banks=2, columns=16)
    prof = DisturbanceProfile(acmin_log_mean=np.log(12.0), acmin_log_sigma=0.5, flips_per_event=2)
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, g.n_rows, n)
    holds = rng.integers(28, 400, n) if press else np.full(n, 28)
    devs = [new_device(g, seed=seed, profile=prof,
                       mitigation_config=None if mit is None else MitigationConfig(**vars(mit)))
            for _ in range(2)]
    _scalar_pairs(devs[0], rows, holds, ref_every)
    _batch_pairs(devs[1], rows, holds, ref_every)
    a, b = devs
    assert a.events == b.events
    assert np.array_equal(a.stats, b.stats)
    assert a.cycle == b.cycle
    assert a.fingerprint() == b.fingerprint()


def test_hammer_refuses_open_bank(geom):
    dev = new_device(geom)
    act(dev, RowAddress(row=1))
    with pytest.raises(ProtocolError):
        dev.hammer(np.array([3]))
