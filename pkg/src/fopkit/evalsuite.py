"""Verification, matching and feature-space analytics.

Verification scores a (face, voice) trial as the cosine between the two
projected, normalised modality embeddings ``u`` and ``v``. Fused embeddings
need both inputs at once, so they cannot score a single cross-modal pair
symmetrically; they are used only by :func:`feature_analytics`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from . import numcore as nc
from .dataio import EmbeddingBank, LabelTable, TrialSet
from .model import FopParams, fuse, project_face, project_voice


class DegenerateTrialsError(ValueError):
    pass


# ---------------------------------------------------------------- scoring


def embed_bank(params: FopParams, bank: EmbeddingBank) -> np.ndarray:
    if bank.modality == "face":
        return project_face(params, bank.vectors)
    return project_voice(params, bank.vectors)


def score_pairs(params: FopParams, bank_f: EmbeddingBank, bank_v: EmbeddingBank,
                face_ids, voice_ids) -> np.ndarray:
    fi = [bank_f.index(i) for i in face_ids]
    vi = [bank_v.index(i) for i in voice_ids]
    U = embed_bank(params, bank_f)
    V = embed_bank(params, bank_v)
    return np.clip(np.sum(U[fi] * V[vi], axis=1), -1.0, 1.0)


def score_trials(params: FopParams, bank_f: EmbeddingBank, bank_v: EmbeddingBank,
                 trials: TrialSet) -> TrialSet:
    scores = score_pairs(params, bank_f, bank_v, trials.face_ids, trials.voice_ids)
    return TrialSet(trials.face_ids, trials.voice_ids, trials.labels, scores, trials.skipped_strata)


# ---------------------------------------------------------------- ROC / EER / AUC


@dataclass
class RocCurve:
    thresholds: np.ndarray   # ascending, last entry +inf
    far: np.ndarray
    frr: np.ndarray


def _split(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    pos, neg = s[y], s[~y]
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateTrialsError(f"need positives and negatives, got {len(pos)}/{len(neg)}")
    return s, pos, neg


def roc_curve(scores, labels) -> RocCurve:
    """FAR/FRR at every distinct score used as threshold (accept iff score >= t), plus +inf."""
    s, pos, neg = _split(scores, labels)
    t = np.append(np.unique(s), np.inf)
    pos, neg = np.sort(pos), np.sort(neg)
    far = (len(neg) - np.searchsorted(neg, t, side="left")) / len(neg)
    frr = np.searchsorted(pos, t, side="left") / len(pos)
    return RocCurve(t, far, frr)


def _crossing(t, far, frr) -> tuple[float, float]:
    diff = far - frr   # starts at 1, ends at -1, non-increasing
    hit = np.flatnonzero(diff <= 0)[0]
    if diff[hit] == 0 or hit == 0:
        return float(far[hit]), float(t[hit])
    d1, d2 = diff[hit - 1], diff[hit]
    w = d1 / (d1 - d2)
    value = far[hit - 1] + w * (far[hit] - far[hit - 1])
    t0, t1 = t[hit - 1], t[hit]
    thr = t0 if not np.isfinite(t1) else t0 + w * (t1 - t0)
    return float(value), float(thr)


def eer(scores, labels) -> tuple[float, float]:
    """Equal error rate and its threshold.

    The crossing of FAR and FRR is linearly interpolated between the two
    adjacent sweep points that bracket it.
    """
    roc = roc_curve(scores, labels)
    return _crossing(roc.thresholds, roc.far, roc.frr)


def auc_rank(scores, labels) -> float:
    """P(positive outscores negative), ties counted one half (Mann-Whitney)."""
    s, pos, neg = _split(scores, labels)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    ranks = rankdata(s)   # midranks for ties
    P, N = len(pos), len(neg)
    return float((ranks[y].sum() - P * (P + 1) / 2.0) / (P * N))


def auc_trapezoid(scores, labels) -> float:
    roc = roc_curve(scores, labels)
    tpr = 1.0 - roc.frr
    # thresholds ascending => FAR descending; integrate TPR d(FAR)
    return float(np.sum((roc.far[:-1] - roc.far[1:]) * (tpr[:-1] + tpr[1:]) * 0.5))


def auc(scores, labels) -> float:
    a = auc_rank(scores, labels)
    b = auc_trapezoid(scores, labels)
    if abs(a - b) > 1e-9:
        raise ArithmeticError(f"rank AUC {a} and trapezoid AUC {b} disagree")
    return a


def verify_metrics(trials: TrialSet) -> dict:
    if trials.scores is None:
        raise ValueError("trials are unscored")
    e, _ = eer(trials.scores, trials.labels)
    return {"eer": e, "auc": auc(trials.scores, trials.labels),
            "n_pos": trials.n_pos, "n_neg": trials.n_neg}


# ---------------------------------------------------------------- matching


@dataclass
class MatchReport:
    n_c: int
    trials: int
    accuracy: float


Scorer = Callable[[list, list], np.ndarray]


def cosine_scorer(params: FopParams, bank_f: EmbeddingBank, bank_v: EmbeddingBank) -> Scorer:
    U = embed_bank(params, bank_f)
    V = embed_bank(params, bank_v)

    def score(face_ids, voice_ids):
        fi = [bank_f.index(i) for i in face_ids]
        vi = [bank_v.index(i) for i in voice_ids]
        return np.sum(U[fi] * V[vi], axis=1)

    return score


def match_1_to_n(params: FopParams | None, bank_f: EmbeddingBank, bank_v: EmbeddingBank,
                 labels: LabelTable, n_c: int, trials_count: int, rng: np.random.Generator,
                 direction: str = "voice_probe", scorer: Scorer | None = None) -> MatchReport:
    """1:n_c cross-modal matching.

    Each trial draws a probe instance and a gallery of ``n_c`` instances from
    the other modality: one of the probe's identity and ``n_c - 1`` from
    distinct other identities. A trial is correct iff the true match scores
    strictly highest; ties count as wrong.
    """
    if direction not in ("voice_probe", "face_probe"):
        raise ValueError(f"unknown direction {direction!r}")
    if scorer is None:
        scorer = cosine_scorer(params, bank_f, bank_v)
    faces: dict[str, list[str]] = {}
    voices: dict[str, list[str]] = {}
    for i in bank_f.ids:
        faces.setdefault(labels.identity(i), []).append(i)
    for i in bank_v.ids:
        voices.setdefault(labels.identity(i), []).append(i)
    idents = sorted(set(faces) & set(voices))
    if len(idents) < n_c or n_c < 2:
        raise ValueError(f"1:{n_c} matching needs at least {max(n_c, 2)} identities, have {len(idents)}")
    probes, gallery = (voices, faces) if direction == "voice_probe" else (faces, voices)
    correct = 0
    for _ in range(trials_count):
        p = int(rng.integers(len(idents)))
        rest = rng.choice(len(idents) - 1, size=n_c - 1, replace=False)
        rest = [r + (r >= p) for r in rest]
        probe_pool = probes[idents[p]]
        probe = probe_pool[rng.integers(len(probe_pool))]
        gal = []
        for g in [p, *rest]:
            pool = gallery[idents[g]]
            gal.append(pool[rng.integers(len(pool))])
        if direction == "voice_probe":
            s = scorer(gal, [probe] * n_c)
        else:
            s = scorer([probe] * n_c, gal)
        correct += bool(s[0] > np.max(s[1:]))
    return MatchReport(n_c, trials_count, correct / trials_count)


# ---------------------------------------------------------------- analytics


def similarity_stats(l, idents, cap: int = 200_000, rng: np.random.Generator | None = None) -> dict:
    """Cosine statistics over same- and different-identity pairs of embeddings.

    Returns ``orthogonality`` (mean |cos| over different-identity pairs),
    ``same_sim`` and ``diff_sim`` (mean cos). All i < j pairs are used when
    there are at most ``cap`` of them, else ``cap`` pairs are sampled.
    """
    x = nc.l2_normalize(nc.as_matrix(l, "l"))
    y = np.asarray(idents)
    n = len(x)
    if len(np.unique(y)) < 2:
        raise ValueError("need at least two identities")
    if n * (n - 1) // 2 <= cap:
        i, j = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        i = rng.integers(n, size=cap)
        j = rng.integers(n - 1, size=cap)
        j = j + (j >= i)
    c = np.clip(np.sum(x[i] * x[j], axis=1), -1.0, 1.0)
    same = y[i] == y[j]
    return {
        "orthogonality": float(np.mean(np.abs(c[~same]))) if np.any(~same) else float("nan"),
        "same_sim": float(np.mean(c[same])) if np.any(same) else float("nan"),
        "diff_sim": float(np.mean(c[~same])) if np.any(~same) else float("nan"),
    }


def fused_embeddings(params: FopParams, bank_f: EmbeddingBank, bank_v: EmbeddingBank,
                     labels: LabelTable, rng: np.random.Generator):
    """Fuse every face instance with a uniformly drawn same-identity voice."""
    voices: dict[str, list[int]] = {}
    for k, i in enumerate(bank_v.ids):
        voices.setdefault(labels.identity(i), []).append(k)
    fi, vi, idents = [], [], []
    for k, i in enumerate(bank_f.ids):
        ident = labels.identity(i)
        pool = voices.get(ident)
        if not pool:
            continue
        fi.append(k)
        vi.append(pool[rng.integers(len(pool))])
        idents.append(ident)
    u = embed_bank(params, bank_f)[fi]
    v = embed_bank(params, bank_v)[vi]
    return fuse(params, u, v), idents


def feature_analytics(params: FopParams, bank_f: EmbeddingBank, bank_v: EmbeddingBank,
                      labels: LabelTable, rng: np.random.Generator, cap: int = 200_000) -> dict:
    l, idents = fused_embeddings(params, bank_f, bank_v, labels, rng)
    return similarity_stats(l, idents, cap, rng)


# ---------------------------------------------------------------- output


def write_csv(path, header: list[str], rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def write_roc(path, roc: RocCurve) -> None:
    write_csv(path, ["threshold", "far", "frr"], zip(roc.thresholds, roc.far, roc.frr))
