"""Time each loss over growing n and fit log-log slopes.

    python3 scripts/bench_losses.py --reps 5 --out bench.csv
"""

import argparse

from _common import write_csv

from fopkit.benchlosses import BENCH_KINDS, SLOPE_BRACKETS, bench, compare_at, report_rows

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--losses", default=",".join(BENCH_KINDS))
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--compare-n", type=int, default=256)
    ap.add_argument("--out")
    args = ap.parse_args()
    reports = []
    for kind in args.losses.split(","):
        r = bench(kind, reps=args.reps)
        reports.append(r)
        lo, hi = SLOPE_BRACKETS[kind]
        pts = "  ".join(f"{n}:{s:.3g}s" for n, s in zip(r.n, r.seconds))
        print(f"{kind:>12}  slope {r.slope:5.2f}  [{lo}, {hi}]  {pts}")
    if args.compare_n:
        times = compare_at(args.compare_n, reps=args.reps)
        print(f"n={args.compare_n}: " + ", ".join(f"{k} {v:.3g}s" for k, v in times.items()))
    if args.out:
        write_csv(args.out, ["loss", "n", "median_seconds", "slope"], report_rows(reports))
