#!/usr/bin/env python3
"""Relative-error CDF of the throughput estimator against the round-level backend."""
import argparse
import csv

import numpy as np

from veritas.pipelines import error_cdf, f_accuracy_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--experiments", type=int, default=60)
    ap.add_argument("--payloads", type=int, default=40)
    ap.add_argument("--out", default="f_accuracy_cdf.csv")
    a = ap.parse_args()

    samples = f_accuracy_sweep(a.seed, a.experiments, a.payloads)
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rel_error", "cdf"])
        w.writerows(error_cdf(samples))
    abs_err = np.array([abs(s.predicted_mbps - s.observed_mbps) for s in samples])
    rel = np.array([abs(s.predicted_mbps - s.observed_mbps) / s.observed_mbps for s in samples])
    print(f"{len(samples)} transfers")
    print(f"within 1 Mbps: {np.mean(abs_err <= 1.0):.1%}")
    print(f"median |rel error|: {np.median(rel):.3f}, p90: {np.quantile(rel, 0.9):.3f}")
    print(f"wrote {a.out}")


if __name__ == "__main__":
    main()
