"""Image-task convergence and learning-rate decay ablation on the desk-mnist preset.

Uses real IDX files when SPYKERSIM_DATA points at them, otherwise the
bundled synthetic surrogate.
"""

import argparse
import json
from statistics import median

from spykersim.config import from_dict
from spykersim.experiment import run_experiment
from spykersim.suites import decay_ablation


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--ablation-horizon-ms", type=float, default=30_000.0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    t90s, best = [], []
    on, off = [], []
    for seed in range(args.seeds):
        res = run_experiment(from_dict({"preset": "desk-mnist", "seed": seed,
                                        "target_accuracy": 0.9}))
        t90s.append(res.summary["time_to_90_ms"])
        best.append(res.summary["best_accuracy"])
        abl = decay_ablation(from_dict({
            "preset": "desk-mnist", "seed": seed,
            "horizon_ms": args.ablation_horizon_ms,
            "compute": {"training_std_ms": 60.0},
        }))
        on.append(abl["decay_on"]["time_to_85_ms"])
        off.append(abl["decay_off"]["time_to_85_ms"])

    reached = [t for t in t90s if t is not None]
    report = {
        "time_to_90_ms": {"per_seed": t90s,
                          "median": median(reached) if reached else None},
        "best_accuracy_median": median(best),
        "decay_time_to_85_ms": {
            "on_median": median(t for t in on if t is not None),
            "off_median": median(t for t in off if t is not None),
        },
    }
    print(f"time-to-90 median: {report['time_to_90_ms']['median']}")
    print(f"best accuracy median: {report['best_accuracy_median']:.3f}")
    print(f"decay on/off time-to-85 medians: "
          f"{report['decay_time_to_85_ms']['on_median']:.0f} / "
          f"{report['decay_time_to_85_ms']['off_median']:.0f} ms")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2)


if __name__ == "__main__":
    main()
