"""RowHammer and RowPress thresholds, then TRR versus PRAC on a many-sided pattern."""

from memcentric import DisturbanceProfile, RowAddress, new_device
from memcentric.disturbance import measure_acmin
from memcentric.harness import parse_config, run
from memcentric.geometry import DramGeometry


def main():
    geom = DramGeometry(banks_per_rank=1, subarrays_per_bank=1, rows_per_subarray=64, columns_per_row=64)
    dev = new_device(geom, seed=1, profile=DisturbanceProfile(vrd_ratio_max=1.0))
    dev.acmin_base[:] = dev.acmin_current[:] = 4096
    aggressor = RowAddress(row=20)
    print("hold (x tRAS)  activations to first flip")
    for factor in (1, 8, 64, 1000):
        n = measure_acmin(dev, aggressor, hold=factor * dev.timing.tRAS)
        print(f"{factor:>13}  {n}")

    print("\nmany-sided attack, 20000 activations")
    for slots in (1, 2, 3, 4):
        cfg = parse_config("builtin:attack_many_sided", overrides={"mitigation.sampler_slots": slots})
        print(f"  TRR, {slots} sampler slots: {run(cfg, 'attack').summary['flips']} flips")
    cfg = parse_config("builtin:attack_many_sided",
                       overrides={"mitigation.kind": "prac", "mitigation.threshold": 32})
    print(f"  PRAC, threshold 32:      {run(cfg, 'attack').summary['flips']} flips")


if __name__ == "__main__":
    main()
