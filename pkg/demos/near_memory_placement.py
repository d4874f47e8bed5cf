"""Roofline placement of LLM-style kernels and multi-unit scaling."""

from memcentric.pnm import KernelDescriptor, default_unit_set, papi_schedule, scaling_curve


def main():
    units = default_unit_set()
    kernels = [
        KernelDescriptor("attention", 2e9, 4e9, resident_unit="attn_pim"),
        KernelDescriptor("fc_decode", 4e9, 2e9, resident_unit="fc_pim"),
        KernelDescriptor("fc_batched", 4e11, 2e9),
    ]
    p = papi_schedule(kernels, units)
    for k in kernels:
        print(f"{k.name:<11} {k.arithmetic_intensity:>6.1f} ops/B -> {p.assignment[k.name]:<9}"
              f"{p.times[k.name] * 1e3:8.3f} ms  {p.rationale[k.name]}")

    k = KernelDescriptor("stream", 1e14, 1e12)  # 100 ops/B
    base = units[1]
    print("\nunits  resident  host-fed")
    for res, fed in zip(scaling_curve(base, k, [1, 4, 16, 64]),
                        scaling_curve(base, k, [1, 4, 16, 64], host_fed=True)):
        print(f"{res.n_units:>5}  {res.ratio:>8.1f}  {fed.ratio:>8.2f}")


if __name__ == "__main__":
    main()
