import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from memcentric import (Command, CommandKind, DisturbanceProfile, DramGeometry, TimingParams,
                        new_device)

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_geometry(rows=64, subarrays=1, banks=1, columns=64):
    return DramGeometry(channels=1, ranks_per_channel=1, banks_per_rank=banks,
                        subarrays_per_bank=subarrays, rows_per_subarray=rows,
                        columns_per_row=columns)


def fixed_device(acmin=4096.0, rows=64, subarrays=1, banks=1, mitigation=None, timing=None,
                 vrd=1.0, seed=0, **profile_kw):
    """Device whose every row has the same base threshold and no VRD spread."""
    prof = DisturbanceProfile(vrd_ratio_max=vrd, **profile_kw)
    dev = new_device(small_geometry(rows, subarrays, banks), timing or TimingParams(), seed,
                     prof, mitigation)
    dev.acmin_base[:] = acmin
    dev.acmin_current[:] = acmin
    return dev


def act(dev, addr, cycle=0):
    return dev.issue(Command(CommandKind.ACT, addr, issue_cycle=cycle))


def pre(dev, addr, cycle=0):
    return dev.issue(Command(CommandKind.PRE, addr, issue_cycle=cycle))


def pair(dev, addr, hold=None):
    """ACT then PRE after ``hold`` open cycles, on the command path."""
    r = act(dev, addr)
    if r.rejected:
        return r
    opened = dev.cycle - dev.timing.tRCD
    h = dev.timing.tRAS if hold is None else hold
    return pre(dev, addr, opened + h)


@pytest.fixture
def geom():
    return small_geometry()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list = []


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion, then assert it."""
    def record(n: int, ok: bool, detail: str):
        ACCEPTANCE_LINES.append((n, f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"))
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
