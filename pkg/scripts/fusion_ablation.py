"""Gated against linear fusion on a corpus with clean faces and noisy voices.

    python3 scripts/fusion_ablation.py --seeds 0,1,2
"""

import argparse

from _common import seeds_arg, summarize

from fopkit.experiments import ABLATION_SYNTH, fusion_ablation

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--seeds", type=seeds_arg, default=(0, 1, 2))
    ap.add_argument("--out")
    args = ap.parse_args()
    print(f"face noise {ABLATION_SYNTH.face_noise_std}, voice noise {ABLATION_SYNTH.voice_noise_std}")
    summarize(fusion_ablation(args.seeds), args.out)
