import numpy as np
import pytest

from memcentric import DisturbanceProfile, RowAddress, new_device
from memcentric.pud import PudError, TrngModel, monobit, quac_trng, runs_test
from memcentric.pud.trng import REFERENCE_GBPS, RELATIVE_THROUGHPUT, calibrate_fractions

from .conftest import small_geometry


def trng_device(seed=0):
    return new_device(small_geometry(rows=64, subarrays=2, columns=4096), seed=seed,
                      profile=DisturbanceProfile(enabled=False))


@pytest.mark.parametrize("n", sorted(RELATIVE_THROUGHPUT))
def test_model_hits_calibrated_throughput(n):
    assert TrngModel().throughput_gbps(n) == pytest.approx(REFERENCE_GBPS * RELATIVE_THROUGHPUT[n])


def test_calibration_round_trip():
    f = calibrate_fractions({4: 2.0}, 1000, 2, 500.0)
    assert TrngModel(1000, 2, 500.0, f).throughput_gbps(4) == pytest.approx(2.0)
    assert 0 < TrngModel().harvest_fraction[8] < 1


def test_bits_are_unbiased_and_deterministic():
    a = quac_trng(trng_device(3), 4, 200_000)
    b = quac_trng(trng_device(3), 4, 200_000)
    assert np.array_equal(a.bits, b.bits) and a.ops == -(-200_000 // 4096)
    bias, p = monobit(a.bits)
    assert p > 1e-4 and bias < 0.01
    assert runs_test(a.bits) > 1e-4


def test_statistics_reject_constant_streams():
    zeros = np.zeros(10_000, dtype=np.uint8)
    assert monobit(zeros)[1] < 1e-10 and runs_test(zeros) == 0.0
    alt = np.tile([0, 1], 5000).astype(np.uint8)
    assert monobit(alt)[0] == 0 and runs_test(alt) < 1e-10


@pytest.mark.parametrize("kw", [dict(n_rows=3, n_bits=10), dict(n_rows=4, n_bits=10**9, max_ops=10)])
def test_trng_argument_errors(kw):
    with pytest.raises(PudError):
        quac_trng(trng_device(), **kw)


def test_too_many_rows_for_subarray():
    dev = new_device(small_geometry(rows=8), profile=DisturbanceProfile(enabled=False))
    with pytest.raises(PudError, match="exceed"):
        quac_trng(dev, 16, 10)


def test_other_subarray():
    dev = trng_device()
    r = quac_trng(dev, 8, 5000, subarray=RowAddress(subarray=1))
    assert r.bits.size == 5000 and not dev.data[:64].any()
