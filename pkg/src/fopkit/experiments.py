"""Paired synthetic experiments: loss comparison, alpha sweep, fusion ablation, matching."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataio import EmbeddingBank, LabelTable, make_trials, protocol_ids
from .evalsuite import feature_analytics, match_1_to_n, score_trials, verify_metrics
from .model import FopParams
from .numcore import make_rng
from .synthgen import SynthConfig, generate
from .trainer import TrainConfig, train

# desk-scale defaults for the synthetic comparisons
SYNTH_TRAIN = TrainConfig(d=64, epochs=30, lr=1e-3)
EVAL_NEG_PER_POS = 10
EVAL_SEED = 1234


def partition(bank_f: EmbeddingBank, bank_v: EmbeddingBank, labels: LabelTable, part: str):
    return (bank_f.subset(protocol_ids(bank_f, labels, part)),
            bank_v.subset(protocol_ids(bank_v, labels, part)))


def evaluate(params: FopParams, bank_f: EmbeddingBank, bank_v: EmbeddingBank, labels: LabelTable,
             part: str = "unseen", n_neg_per_pos: int = EVAL_NEG_PER_POS, seed: int = EVAL_SEED) -> dict:
    """Verification metrics and fused-feature analytics on one protocol partition."""
    bf, bv = partition(bank_f, bank_v, labels, part)
    trials = make_trials(bf, bv, labels, "none", n_neg_per_pos, make_rng(seed))
    out = verify_metrics(score_trials(params, bf, bv, trials))
    out.update(feature_analytics(params, bf, bv, labels, make_rng(seed + 1)))
    return out


@dataclass
class RunSummary:
    seed: int
    label: str
    metrics: dict
    params: FopParams


def run_one(seed: int, synth: SynthConfig, cfg: TrainConfig, label: str = "") -> RunSummary:
    corpus = generate(replace(synth, seed=seed))
    res = train(corpus.face, corpus.voice, corpus.labels, replace(cfg, seed=seed))
    m = evaluate(res.params, corpus.face, corpus.voice, corpus.labels)
    m["final_ce"] = res.history[-1].ce_term if res.history else float("nan")
    return RunSummary(seed, label or cfg.loss, m, res.params)


def paired_runs(variants: dict[str, TrainConfig], seeds=(0, 1, 2),
                synth: SynthConfig | None = None) -> dict[str, list[RunSummary]]:
    synth = SynthConfig() if synth is None else synth
    return {name: [run_one(s, synth, cfg, name) for s in seeds] for name, cfg in variants.items()}


def mean_metric(runs: list[RunSummary], key: str) -> float:
    return float(np.mean([r.metrics[key] for r in runs]))


def loss_comparison(seeds=(0, 1, 2), losses=("joint", "ce"), synth: SynthConfig | None = None):
    """Joint objective against single-loss baselines on paired seeds."""
    return paired_runs({k: replace(SYNTH_TRAIN, loss=k) for k in losses}, seeds, synth)


def alpha_sweep(alphas=(0.0, 0.1, 0.5, 1.0, 2.0, 5.0), seeds=(0, 1, 2), synth: SynthConfig | None = None):
    return paired_runs({f"alpha={a:g}": replace(SYNTH_TRAIN, alpha=a) for a in alphas}, seeds, synth)


ABLATION_SYNTH = SynthConfig(face_noise_std=0.02, voice_noise_std=0.15)


def fusion_ablation(seeds=(0, 1, 2), synth: SynthConfig | None = None):
    synth = ABLATION_SYNTH if synth is None else synth
    return paired_runs({f: replace(SYNTH_TRAIN, fusion=f) for f in ("gated", "linear")}, seeds, synth)


def matching_curve(params: FopParams, bank_f: EmbeddingBank, bank_v: EmbeddingBank, labels: LabelTable,
                   ncs=(2, 4, 6, 8, 10), trials_count: int = 10000, seed: int = EVAL_SEED,
                   part: str = "unseen", direction: str = "voice_probe") -> list:
    bf, bv = partition(bank_f, bank_v, labels, part)
    return [match_1_to_n(params, bf, bv, labels, n, trials_count, make_rng(seed + n), direction)
            for n in ncs]
