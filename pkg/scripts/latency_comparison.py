"""Median time-to-90% for spyker vs single-server fedasync under two latency maps."""

import argparse
import json
from dataclasses import replace
from statistics import median

from spykersim.config import from_dict
from spykersim.experiment import run_experiment, time_to_accuracy
from spykersim.suites import variant


def times(latency: str, seeds: range) -> dict:
    base = from_dict({"preset": "desk-synth", "target_accuracy": 0.9, "latency": latency})
    out = {}
    for alg in ("spyker", "fedasync"):
        cfg = base if alg == "spyker" else variant(base, alg)
        ts = [time_to_accuracy(run_experiment(replace(cfg, seed=s).validate()).rows, 0.9)
              for s in seeds]
        out[alg] = {"per_seed_ms": ts, "median_ms": median(t for t in ts if t is not None)}
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5, help="number of seeds (0..n-1)")
    ap.add_argument("--out", default=None, help="optional JSON output path")
    args = ap.parse_args()

    report = {}
    for latency in ("aws4", "uniform"):
        report[latency] = times(latency, range(args.seeds))
        sp = report[latency]["spyker"]["median_ms"]
        fa = report[latency]["fedasync"]["median_ms"]
        print(f"{latency}: spyker {sp:.0f} ms, fedasync {fa:.0f} ms "
              f"({(1 - sp / fa) * 100:.0f}% lower)")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2)


if __name__ == "__main__":
    main()
