"""Sweep the orthogonality weight alpha of the joint objective.

    python3 scripts/alpha_sweep.py --alphas 0,0.5,1,2 --seeds 0,1,2
"""

import argparse

from _common import seeds_arg, summarize

from fopkit.experiments import alpha_sweep

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--alphas", default="0,0.1,0.5,1,2,5")
    ap.add_argument("--seeds", type=seeds_arg, default=(0, 1, 2))
    ap.add_argument("--out")
    args = ap.parse_args()
    alphas = tuple(float(a) for a in args.alphas.split(","))
    summarize(alpha_sweep(alphas, args.seeds), args.out)
