"""1:n_c matching accuracy of a joint-loss model trained on the default synthetic corpus.

    python3 scripts/matching_curve.py --seed 0 --trials 10000
"""

import argparse
from dataclasses import replace

from _common import write_csv

from fopkit.experiments import SYNTH_TRAIN, matching_curve
from fopkit.synthgen import SynthConfig, generate
from fopkit.trainer import train

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=10000)
    ap.add_argument("--loss", default="joint")
    ap.add_argument("--out")
    args = ap.parse_args()
    corpus = generate(SynthConfig(seed=args.seed))
    params = train(corpus.face, corpus.voice, corpus.labels,
                   replace(SYNTH_TRAIN, loss=args.loss, seed=args.seed)).params
    reps = matching_curve(params, corpus.face, corpus.voice, corpus.labels, trials_count=args.trials)
    for r in reps:
        print(f"1:{r.n_c:<3} accuracy {r.accuracy:.4f}  (chance {1 / r.n_c:.3f})")
    if args.out:
        write_csv(args.out, ["n_c", "accuracy", "trials"], [[r.n_c, r.accuracy, r.trials] for r in reps])
