"""Acceptance suite.

Each test checks one criterion at its stated tolerance and prints a single
``PASS``/``FAIL`` line with the measured numbers. Run on its own with::

    python3 -m pytest tests/test_acceptance.py -v -s
"""

import time

import numpy as np
import pytest

from fopkit import evalsuite as ev
from fopkit import losses as L
from fopkit.benchlosses import BENCH_KINDS, SLOPE_BRACKETS, bench, compare_at
from fopkit.cli import main as cli_main
from fopkit.dataio import training_identities
from fopkit.experiments import (SYNTH_TRAIN, fusion_ablation, loss_comparison, matching_curve,
                                mean_metric)
from fopkit.gradcheck import gradcheck
from fopkit.model import ModelDims, init_params
from fopkit.numcore import make_rng
from fopkit.synthgen import SynthConfig, generate
from fopkit.trainer import LOSS_KINDS, train

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok
    return emit


# ---------------------------------------------------------------- gradients


def test_gradient_correctness(report):
    t0 = time.perf_counter()
    res = gradcheck(LOSS_KINDS, seeds=20)
    elapsed = time.perf_counter() - t0
    worst = max(r.max_rel_err for r in res)
    ok = worst <= 1e-4 and elapsed < 30 and {r.loss for r in res} == set(LOSS_KINDS)
    detail = ", ".join(f"{r.loss} {r.max_rel_err:.1e}" for r in res) + f"; {elapsed:.1f}s"
    assert report("gradient correctness", ok, detail)


# ---------------------------------------------------------------- metrics


def brute_eer(s, y):
    pos, neg = s[y], s[~y]
    t = np.append(np.unique(s), np.inf)
    far = (neg[None, :] >= t[:, None]).mean(1)
    frr = (pos[None, :] < t[:, None]).mean(1)
    d = far - frr
    k = int(np.argmax(d <= 0))
    if d[k] == 0 or k == 0:
        return far[k]
    w = d[k - 1] / (d[k - 1] - d[k])
    return far[k - 1] + w * (far[k] - far[k - 1])


def brute_auc(s, y):
    pos, neg = s[y], s[~y]
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return (gt + 0.5 * eq) / (len(pos) * len(neg))


def test_metric_oracles(report):
    rng = make_rng(2024)
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(2, 501))
        y = rng.random(n) < rng.uniform(0.1, 0.9)
        y[0], y[-1] = True, False
        s = rng.normal(size=n) + rng.uniform(0, 2) * y
        if k % 3 == 0:
            s = np.round(s, 1)   # ties
        worst = max(worst, abs(ev.eer(s, y)[0] - brute_eer(s, y)), abs(ev.auc(s, y) - brute_auc(s, y)))
    perfect = ev.eer([0.9, 0.7, 0.2, 0.1], [1, 1, 0, 0])[0]
    inverted = ev.eer([0.1, 0.2, 0.7, 0.9], [1, 1, 0, 0])[0]
    ok = worst <= 1e-9 and perfect == 0.0 and inverted == 1.0
    assert report("metric oracles", ok, f"max |diff| {worst:.1e}; perfect EER {perfect}, inverted EER {inverted}")


# ---------------------------------------------------------------- OC identities


def test_oc_identities(report):
    y2 = 0.2 / np.sqrt(0.75)
    cases = [
        (np.array([[0.3, -0.2, 0.5]] * 2), [1, 1], 0.0),
        (np.array([[1.0, 0.0], [0.0, 2.0]]), [0, 1], 0.0),
        (np.array([[0.6, 0.8], [0.6, 0.8]]), [0, 1], 1.0),
        (np.array([[1.0, 0.0, 0.0], [0.5, np.sqrt(0.75), 0.0],
                   [0.2, y2, np.sqrt(1 - 0.04 - y2 ** 2)]]), [0, 0, 1], 0.75),
    ]
    trivial = [abs(L.oc_loss(l, y).value - want) for l, y, want in cases]
    trivial_ok = trivial[:3] == [0.0, 0.0, 0.0] and trivial[3] <= 1e-12

    rng = make_rng(7)
    scale_err = 0.0
    for _ in range(50):
        l = rng.normal(size=(12, 8))
        y = rng.integers(4, size=12)
        base = L.oc_loss(l, y).value
        for c in (1e-3, 1.0, 1e3):
            scale_err = max(scale_err, abs(L.oc_loss(c * l, y).value - base))

    z, l = rng.normal(size=(8, 5)), rng.normal(size=(8, 6))
    y = rng.integers(5, size=8)
    j, ce = L.joint_loss(z, l, y, alpha=0.0), L.ce_loss(z, y)
    bit_equal = j.value == ce.value and j.grads["logits"].tobytes() == ce.grads["logits"].tobytes()

    ok = trivial_ok and scale_err <= 1e-9 and bit_equal
    assert report("OC identities", ok,
                  f"trivial errs {trivial}; scale err {scale_err:.1e}; alpha=0 bit-equal {bit_equal}")


# ---------------------------------------------------------------- direction


@pytest.fixture(scope="module")
def comparison():
    t0 = time.perf_counter()
    runs = loss_comparison(seeds=(0, 1, 2), losses=("joint", "ce"))
    return runs, time.perf_counter() - t0


def test_direction_verification(report, comparison):
    runs, elapsed = comparison
    j_eer, c_eer = mean_metric(runs["joint"], "eer"), mean_metric(runs["ce"], "eer")
    aucs = [r.metrics["auc"] for r in runs["joint"]]
    ok = min(aucs) >= 0.85 and j_eer < c_eer and elapsed < 300
    detail = (f"joint AUC {[round(a, 4) for a in aucs]}; mean EER joint {j_eer:.4f} vs ce {c_eer:.4f}; "
              f"{elapsed:.1f}s")
    assert report("direction (verification)", ok, detail)


def test_direction_analytics(report, comparison):
    runs, _ = comparison
    m = {k: {s: mean_metric(v, s) for s in ("orthogonality", "same_sim")} for k, v in runs.items()}
    ok = (m["joint"]["orthogonality"] < m["ce"]["orthogonality"]
          and m["joint"]["same_sim"] > m["ce"]["same_sim"])
    detail = (f"orthogonality joint {m['joint']['orthogonality']:.4f} vs ce {m['ce']['orthogonality']:.4f}; "
              f"same_sim joint {m['joint']['same_sim']:.4f} vs ce {m['ce']['same_sim']:.4f}")
    assert report("direction (feature analytics)", ok, detail)


# ---------------------------------------------------------------- fusion ablation


def test_fusion_ablation(report):
    runs = fusion_ablation(seeds=(0, 1, 2))
    g, li = mean_metric(runs["gated"], "auc"), mean_metric(runs["linear"], "auc")
    assert report("fusion ablation", g >= li, f"mean unseen AUC gated {g:.4f} vs linear {li:.4f}")


# ---------------------------------------------------------------- complexity


def test_complexity_ordering(report):
    t0 = time.perf_counter()
    reps = {k: bench(k, reps=3) for k in BENCH_KINDS}
    n_common = max(reps["triplet"].n)   # largest n every loss is run at
    times = compare_at(n_common, reps=3)
    elapsed = time.perf_counter() - t0
    in_bracket = {k: SLOPE_BRACKETS[k][0] <= r.slope <= SLOPE_BRACKETS[k][1] for k, r in reps.items()}
    order = times["ours"] < times["contrastive"] < times["triplet"]
    ok = all(in_bracket.values()) and order and elapsed < 180
    detail = (", ".join(f"{k} {r.slope:.2f}" for k, r in reps.items())
              + f"; at n={n_common}: " + " < ".join(f"{k} {times[k]:.2e}s" for k in times)
              + f"; {elapsed:.1f}s")
    assert report("complexity ordering", ok, detail)


# ---------------------------------------------------------------- matching


def test_matching_protocol(report):
    corpus = generate(SynthConfig())
    untrained = init_params(ModelDims(corpus.face.dim, corpus.voice.dim, SYNTH_TRAIN.d,
                                       len(training_identities(corpus.labels))), make_rng(0))
    chance = matching_curve(untrained, corpus.face, corpus.voice, corpus.labels, ncs=(2,))[0].accuracy
    params = train(corpus.face, corpus.voice, corpus.labels, SYNTH_TRAIN).params
    curve = [r.accuracy for r in matching_curve(params, corpus.face, corpus.voice, corpus.labels)]
    ncs = (2, 4, 6, 8, 10)
    monotone = all(b <= a for a, b in zip(curve, curve[1:]))
    above = all(a > 1.0 / n for a, n in zip(curve, ncs))
    ok = abs(chance - 0.5) <= 0.05 and monotone and above
    # diagnostic only: spread of the untrained 1:2 accuracy across initialisations
    spread = [matching_curve(init_params(untrained.dims, make_rng(s)), corpus.face, corpus.voice,
                             corpus.labels, ncs=(2,), trials_count=2000)[0].accuracy for s in range(1, 9)]
    detail = (f"untrained 1:2 {chance:.4f} (other inits {min(spread):.3f}..{max(spread):.3f}, "
              f"mean {np.mean(spread):.3f}); trained ") + ", ".join(f"1:{n} {a:.4f}" for n, a in zip(ncs, curve))
    assert report("matching protocol", ok, detail)


# ---------------------------------------------------------------- determinism


PIPELINE = [
    ["synth"],
    ["train", "--set", f"train.d={SYNTH_TRAIN.d}", "--set", f"train.epochs={SYNTH_TRAIN.epochs}"],
    ["eval-verify"],
    ["eval-match", "--set", "eval.match_trials=2000"],
    ["analyze"],
    ["gradcheck", "--seeds", "2"],
]


def test_determinism(report, tmp_path):
    outputs = []
    for run in ("a", "b"):
        wd = tmp_path / run
        for step in PIPELINE:
            assert cli_main([step[0], "--workdir", str(wd), *step[1:]]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(wd.iterdir())
                        if p.suffix in (".csv", ".ckpt")})
    names = sorted(outputs[0])
    same = outputs[0] == outputs[1] and "model.ckpt" in names
    assert report("determinism", same, f"{len(names)} files compared: {', '.join(names)}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
