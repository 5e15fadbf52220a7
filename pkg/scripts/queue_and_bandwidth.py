"""Server queue peaks under load spread and per-algorithm bytes in a fixed window."""

import argparse
import json
from statistics import median

from spykersim.config import from_dict
from spykersim.suites import bandwidth_report, queue_trace

BW_ALGS = ("spyker", "sync-spyker", "fedavg", "fedasync", "hierfavg")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--queue-clients", type=int, default=200)
    ap.add_argument("--training-std-ms", type=float, default=60.0)
    ap.add_argument("--window-ms", type=float, default=110_000.0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    peaks = {"spyker": [], "fedasync": []}
    bw = {alg: [] for alg in BW_ALGS}
    for seed in range(args.seeds):
        qcfg = from_dict({"preset": "desk-synth", "seed": seed,
                          "n_clients": args.queue_clients, "horizon_ms": 30_000.0})
        qr = queue_trace(qcfg, training_std_ms=args.training_std_ms)
        for alg in peaks:
            peaks[alg].append(qr[alg]["peak"])
        br = bandwidth_report(from_dict({"preset": "desk-synth", "seed": seed}),
                              window_ms=args.window_ms)
        for alg in BW_ALGS:
            bw[alg].append(br[alg]["total_bytes"])

    report = {
        "queue_peaks": {alg: median(v) for alg, v in peaks.items()},
        "window_bytes": {alg: median(v) for alg, v in bw.items()},
    }
    for alg, peak in report["queue_peaks"].items():
        print(f"queue peak {alg}: {peak:.0f}")
    for alg in BW_ALGS:
        print(f"bytes in {args.window_ms / 1000:.0f} s {alg}: "
              f"{report['window_bytes'][alg] / 1e6:.2f} MB")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2)


if __name__ == "__main__":
    main()
