"""Chip-managed refresh: locking one subarray at a time versus blocking the rank."""

from memcentric.harness import parse_config, run


def main():
    runs = {
        "subarray locks": {},
        "rank locks": {"smd.lock_scope": "rank"},
        "no maintenance": {"smd.enabled": False},
    }
    print(f"{'mode':<16}{'total cycles':>14}{'retries':>10}  data digest")
    for name, overrides in runs.items():
        s = run(parse_config("builtin:smd_uniform4", overrides=overrides), "simulate").summary
        print(f"{name:<16}{s['total_cycles']:>14}{s['retries']:>10}  {s['data_digest']}")


if __name__ == "__main__":
    main()
