import numpy as np
import pytest

from memcentric import (Command, CommandKind, ConfigError, DisturbanceProfile, MitigationConfig,
                        ResponseKind, RowAddress, TimingParams, new_device)
from memcentric import _kernels as K
from memcentric.mitigation import RefreshScheduler, prac_bound_exhaustive, refresh_tick

from .conftest import act, fixed_device, pair, small_geometry


@pytest.mark.parametrize("kw,msg", [
    (dict(kind="para"), "mitigation.p is required"),
    (dict(kind="trr"), "mitigation.sampler_slots is required"),
    (dict(kind="prac"), "mitigation.threshold is required"),
    (dict(kind="para", p=1.5), "p ≤ 1"),
    (dict(kind="bogus"), "mitigation.kind"),
])
def test_config_errors_name_the_key(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        MitigationConfig(**kw).validate()


def test_para_always_refreshing_protects_adjacent_rows():
    dev = fixed_device(50, mitigation=MitigationConfig.para(1.0))
    dev.hammer(np.full(5000, 20))
    assert dev.acc[[19, 21]].max() == 1.0  # refreshed at ACT, then one PRE contribution
    assert all(e.victim.row in (18, 22) for e in dev.events)
    assert dev.stats[K.ST_PARA] == 5000


def test_para_refresh_count_is_binomial():
    p, n = 0.01, 200_000
    dev = fixed_device(1e12, mitigation=MitigationConfig.para(p), seed=4)
    dev.hammer(np.full(n, 20))
    sd = np.sqrt(n * p * (1 - p))
    assert abs(dev.stats[K.ST_PARA] - n * p) < 4 * sd


def test_trr_sampler_evicts_oldest():
    rows = np.full(2, -1, dtype=np.int64)
    counts = np.zeros(2, dtype=np.int64)
    meta = np.zeros(2, dtype=np.int64)
    for r in (5, 5, 7, 9):
        K.trr_observe(rows, counts, meta, r)
    # 5 was inserted first and is replaced by 9
    assert sorted(zip(rows, counts)) == [(7, 1), (9, 1)]


def test_trr_catches_pattern_it_can_track():
    t = TimingParams(tREFI=1989, tREFW=1989 * 64)
    dev = fixed_device(200, mitigation=MitigationConfig.trr(2), timing=t)
    for _ in range(200):
        dev.hammer(np.tile([19, 21], 25))
        dev.issue(Command(CommandKind.REF, issue_cycle=dev.cycle))
    # sampled aggressors get their ±1 neighbours refreshed; ±2 rows are not covered
    assert not [e for e in dev.events if e.victim.row in (18, 20, 22)]
    assert dev.counters["trr_refreshes"] > 0


def test_prac_alert_refreshes_and_blocks():
    m = MitigationConfig.prac(4, recovery_cycles=100)
    dev = fixed_device(1e9, mitigation=m)
    a = RowAddress(row=20)
    for k in range(3):
        assert pair(dev, a).kind is ResponseKind.OK
    assert dev.act_counter[20] == 3
    r = pair(dev, a)
    assert r.kind is ResponseKind.ALERT and not r.rejected
    assert dev.act_counter[20] == 0
    assert dev.acc[18:23].sum() == 0  # ±2 victims refreshed, aggressor untouched
    blocked = act(dev, RowAddress(row=40))
    assert blocked.rejected and blocked.retry_at == r.completion_cycle + 100
    ok = act(dev, RowAddress(row=40), blocked.retry_at)
    assert ok.kind is ResponseKind.OK


def test_prac_counters_survive_periodic_refresh():
    dev = fixed_device(1e9, mitigation=MitigationConfig.prac(10))
    dev.hammer(np.full(5, 20))
    dev.issue(Command(CommandKind.REF, issue_cycle=dev.cycle))
    assert dev.act_counter[20] == 5


@pytest.mark.parametrize("threshold", [1, 2, 3])
def test_prac_exhaustive_counter_bound(threshold):
    prof = DisturbanceProfile()
    traces, peak = prac_bound_exhaustive(6, 9, prof, threshold)
    assert traces > 10_000
    assert peak <= prof.blast_weight_sum * threshold + 1e-9


def test_exhaustive_enumeration_count():
    # strings over {pair (2 commands), REF (1 command)} with n rows, length ≤ L:
    # f(L) = 1 + n f(L-2) + f(L-1), minus the empty string
    n, L = 3, 7
    f = {-1: 0, 0: 1}
    for m in range(1, L + 1):
        f[m] = 1 + n * f.get(m - 2, 0) + f[m - 1]
    traces, _ = prac_bound_exhaustive(n, L, DisturbanceProfile(), 2)
    assert traces == f[L] - 1


def test_refresh_scheduler_covers_every_row_each_window():
    t = TimingParams(tREFI=100, tREFW=1600)
    dev = new_device(small_geometry(rows=64, subarrays=2), t, seed=1)
    sched = RefreshScheduler(dev)
    issued = sched.tick(t.tREFW)
    assert len(issued) == t.tREFW // t.tREFI
    assert (dev.last_refresh > 0).all()


def test_refresh_tick_attaches_scheduler(geom):
    dev = new_device(geom, TimingParams(tREFI=100, tREFW=1000))
    assert len(refresh_tick(dev, 350)) == 3
    assert len(refresh_tick(dev, 350)) == 0
