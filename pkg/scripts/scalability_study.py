"""Time-to-target multipliers as the client population doubles, medians over seeds."""

import argparse
import json
import math
from dataclasses import replace
from statistics import median

from spykersim.config import from_dict
from spykersim.suites import UNREACHED, scalability_suite

ALGS = ("spyker", "fedavg", "fedasync")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--clients", type=int, nargs="+", default=[40, 80])
    ap.add_argument("--target", type=float, default=0.85)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    base = from_dict({"preset": "desk-synth"})
    cells: dict = {alg: {str(c): [] for c in args.clients} for alg in ALGS}
    for seed in range(args.seeds):
        table = scalability_suite(replace(base, seed=seed), tuple(args.clients),
                                  target=args.target)
        for alg in ALGS:
            for c in args.clients:
                v = table["multipliers"][alg][str(c)]["time"]
                cells[alg][str(c)].append(math.inf if v == UNREACHED else v)

    report = {alg: {c: median(vs) for c, vs in by_count.items()}
              for alg, by_count in cells.items()}
    header = "clients".ljust(10) + "".join(str(c).rjust(10) for c in args.clients)
    print(header)
    for alg in ALGS:
        row = alg.ljust(10)
        for c in args.clients:
            m = report[alg][str(c)]
            row += (f"{m:.2f}" if math.isfinite(m) else UNREACHED).rjust(10)
        print(row)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2)


if __name__ == "__main__":
    main()
