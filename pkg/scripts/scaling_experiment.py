"""Certified mixing-time scan at q = 2 and the q-dependence at fixed n.

    python3 scripts/scaling_experiment.py --out results/scaling.csv

Writes T* rows (tmix-scan format) and prints the fitted exponent.
"""

import argparse
import math
import time

from unitriwalk.harness import ExperimentConfig, fit_from_csv, read_rows, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--q-fixed-n", type=int, default=16)
    ap.add_argument("--qs", type=int, nargs="+", default=[2, 3, 5, 7])
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="scaling.csv")
    args = ap.parse_args()

    t0 = time.perf_counter()
    run(ExperimentConfig(kind="tmix-scan", n=args.n, q=[2], samples=args.samples,
                         seed=args.seed, out=args.out))
    fit = fit_from_csv(args.out)
    print(f"q=2: alpha={fit.alpha:.3f} C={fit.C:.3f} max log-residual={fit.residual:.3f}")
    for n, _, t in fit.rows:
        print(f"  n={int(n):3d}  T*={t:8.2f}  T*/n={t / n:6.2f}")

    side = args.out.replace(".csv", "_q.csv")
    run(ExperimentConfig(kind="tmix-scan", n=[args.q_fixed_n], q=args.qs, samples=args.samples,
                         seed=args.seed, out=side))
    ratios = {}
    for r in read_rows(side):
        if r["quantity"] == "T_star":
            q = int(float(r["q_or_p"]))
            ratios[q] = float(r["value"]) / (args.q_fixed_n * math.log(q))
    for q, v in ratios.items():
        print(f"n={args.q_fixed_n} q={q}: T*/(n ln q)={v:.2f}")
    print(f"spread {max(ratios.values()) / min(ratios.values()):.2f}; "
          f"{time.perf_counter() - t0:.0f}s total")


if __name__ == "__main__":
    main()
