"""Spectral gaps of the q-state and binary East models up to the state-space cap."""

import argparse

from unitriwalk.exact import DEFAULT_CAP, gap_table, state_count


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--q", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--p", type=float, nargs="*", default=[0.5])
    ap.add_argument("--cap", type=int, default=DEFAULT_CAP)
    args = ap.parse_args()
    print("flavor,param,n,gap,running_inf,method")
    for flavor, params, model in (("qstate", args.q, "east-q"), ("binary", args.p, "east-binary")):
        for param in params:
            base = param if flavor == "qstate" else 2
            top = max(n for n in range(2, 64) if state_count(model, n, base) <= args.cap)
            for row in gap_table(flavor, param, range(2, top + 1), args.cap):
                print(f"{flavor},{param},{row.n},{row.result.gap:.12f},{row.running_inf:.12f},"
                      f"{row.result.method}")


if __name__ == "__main__":
    main()
