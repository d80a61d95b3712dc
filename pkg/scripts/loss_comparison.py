"""Train every loss kind on paired synthetic corpora and report unseen-identity metrics.

    python3 scripts/loss_comparison.py --seeds 0,1,2 --out losses.csv
"""

import argparse

from _common import seeds_arg, summarize

from fopkit.experiments import loss_comparison

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--seeds", type=seeds_arg, default=(0, 1, 2))
    ap.add_argument("--losses", default="joint,ce,center,git,contrastive,triplet")
    ap.add_argument("--out")
    args = ap.parse_args()
    summarize(loss_comparison(args.seeds, tuple(args.losses.split(","))), args.out)
