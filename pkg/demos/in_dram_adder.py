"""Compile an 8-bit adder to in-subarray micro-ops and run it on 1024 lanes."""

import numpy as np

from memcentric import DisturbanceProfile, RowAddress, new_device
from memcentric.geometry import DramGeometry
from memcentric.pud import NoiseModel, compile_circuit, ripple_adder, run_program, success_rates


def main():
    prog = compile_circuit(ripple_adder(8))
    print(f"{len(prog.ops)} micro-ops, {prog.rows_used} rows, peak {prog.live_peak} live values, "
          f"~{prog.estimated_cycles} cycles")
    print("\n".join(prog.listing().splitlines()[:12]) + "\n...")

    rng = np.random.default_rng(0)
    a, b = rng.integers(0, 256, (2, 1024))
    geom = DramGeometry(banks_per_rank=1, subarrays_per_bank=1)
    for noise in (NoiseModel(), NoiseModel(enabled=True)):
        dev = new_device(geom, seed=3, profile=DisturbanceProfile(enabled=False))
        got = run_program(dev, RowAddress(), prog, {"a": a, "b": b}, noise=noise)
        print(f"noise {'on ' if noise.enabled else 'off'}: {np.mean(got == a + b):.4f} of sums exact, "
              f"per-op success {success_rates(dev)}")


if __name__ == "__main__":
    main()
