"""Backpropagation through the FOP head, Adam, and the training loop.

Only the head's tensors are trained; the face/voice embedding banks are
treated as fixed inputs and never receive gradients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import losses as L
from .dataio import (EmbeddingBank, LabelTable, TrialError, make_trials, protocol_ids,
                     training_identities)
from .evalsuite import score_trials, verify_metrics
from .model import FopParams, ForwardCache, ModelDims, forward, init_params
from .numcore import make_rng

log = logging.getLogger(__name__)

LOSS_KINDS = ("joint", "ce", "oc", "center", "git", "contrastive", "triplet")


class NumericError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    d: int = 128
    alpha: float = 1.0
    loss: str = "joint"
    fusion: str = "gated"
    att_depth: int = 1
    oc_reduction: str = "mean"
    batch_size: int = 128
    epochs: int = 50
    lr: float = 1e-3
    lr_decay_per_epoch: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    contrastive_margin: float = 0.5
    triplet_margin: float = 0.3
    lambda_c: float = 0.5
    lambda_g: float = 0.1
    val_neg_per_pos: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss!r}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not 0 < self.lr_decay_per_epoch <= 1:
            raise ValueError("lr_decay_per_epoch must lie in (0, 1]")
        if self.alpha < 0 or self.d < 1 or self.epochs < 0 or self.lr <= 0:
            raise ValueError("alpha >= 0, d >= 1, epochs >= 0, lr > 0 required")
        if self.oc_reduction not in ("mean", "sum"):
            raise ValueError(f"unknown oc_reduction {self.oc_reduction!r}")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay_per_epoch ** epoch


# ---------------------------------------------------------------- loss on a forward pass


def model_loss(cache: ForwardCache, labels, cfg: TrainConfig,
               centers: np.ndarray | None = None) -> tuple[L.LossOutput, np.ndarray | None]:
    """Configured objective on one batch; grads keyed by cache activation names."""
    y = np.asarray(labels)
    kind = cfg.loss
    if kind == "joint":
        return L.joint_loss(cache.logits, cache.l, y, cfg.alpha, cfg.oc_reduction), centers
    if kind == "ce":
        return L.ce_loss(cache.logits, y), centers
    if kind == "oc":
        return L.oc_loss(cache.l, y, cfg.oc_reduction), centers
    if kind in ("center", "git"):
        ce = L.ce_loss(cache.logits, y)
        if kind == "center":
            aux, new_c = L.center_loss(cache.l, y, centers, cfg.lambda_c)
        else:
            aux, new_c = L.git_loss(cache.l, y, centers, cfg.lambda_c, cfg.lambda_g)
        out = L.LossOutput(ce.value + cfg.alpha * aux.value,
                           {"logits": ce.grads["logits"], "l": cfg.alpha * aux.grads["l"]},
                           {"ce": ce.value, **aux.diag})
        return out, new_c
    if kind == "contrastive":
        return L.contrastive_loss(cache.u, cache.v, y, y, cfg.contrastive_margin), centers
    if kind == "triplet":
        return L.triplet_enumerate(cache.u, cache.v, y, y, cfg.triplet_margin), centers
    raise ValueError(f"unknown loss kind {kind!r}")


def _norm_backward(pre: np.ndarray, n: np.ndarray, dn: np.ndarray) -> np.ndarray:
    return L._norm_backward(pre, n, dn)


def backward(params: FopParams, cache: ForwardCache, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Parameter gradients given loss gradients w.r.t. ``logits``, ``l``, ``u``, ``v``.

    Missing keys mean a zero gradient for that activation.
    """
    if cache.l.shape[1] != params.dims.d or cache.b.shape[1] != params.dims.face_dim:
        raise ValueError("forward cache does not match parameters")
    out = {k: np.zeros_like(t) for k, t in params.tensors.items()}
    dl = np.zeros_like(cache.l)
    if "logits" in grads:
        out["W_cls"] = cache.l.T @ grads["logits"]
        dl = dl + grads["logits"] @ params.W_cls.T
    if "l" in grads:
        dl = dl + grads["l"]

    d = params.dims.d
    du = dl * cache.k * (1.0 - cache.tu ** 2)
    dv = dl * (1.0 - cache.k) * (1.0 - cache.tv ** 2)
    if params.fusion == "gated":
        dh = dl * (cache.tu - cache.tv)
        last = params.att_depth - 1
        for i in range(last, -1, -1):
            if i == last:
                dz = dh * cache.k * (1.0 - cache.k)
            else:
                dz = dh * (cache.att_pre[i] > 0)
            out[f"att_W{i}"] = cache.att_in[i].T @ dz
            out[f"att_b{i}"] = dz.sum(0)
            dh = dz @ params.tensors[f"att_W{i}"].T
        du = du + dh[:, :d]
        dv = dv + dh[:, d:]
    if "u" in grads:
        du = du + grads["u"]
    if "v" in grads:
        dv = dv + grads["v"]

    dpu = _norm_backward(cache.pu, cache.u, du)
    dpv = _norm_backward(cache.pv, cache.v, dv)
    out["W_face"] = cache.b.T @ dpu
    out["b_face"] = dpu.sum(0)
    out["W_voice"] = cache.e.T @ dpv
    out["b_voice"] = dpv.sum(0)
    return out


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: FopParams) -> "AdamState":
        return cls({k: np.zeros_like(t) for k, t in params.tensors.items()},
                   {k: np.zeros_like(t) for k, t in params.tensors.items()})


def adam_step(params: FopParams, grads: dict[str, np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, g in grads.items():
        m = state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        v = state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        params.tensors[k] = params.tensors[k] - lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------- training loop


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    ce_term: float
    oc_term: float
    val_eer: float
    lr: float


@dataclass
class TrainResult:
    params: FopParams
    history: list[EpochRecord] = field(default_factory=list)
    classes: list[str] = field(default_factory=list)


def _batches(n: int, size: int) -> list[slice]:
    cuts = list(range(0, n, size))
    out = [slice(c, min(c + size, n)) for c in cuts]
    # a trailing batch of one cannot form pairs; fold it into its predecessor
    if len(out) > 1 and out[-1].stop - out[-1].start < 2:
        last = out.pop()
        out[-1] = slice(out[-1].start, last.stop)
    return out


def train(bank_f: EmbeddingBank, bank_v: EmbeddingBank, labels: LabelTable,
          cfg: TrainConfig) -> TrainResult:
    cfg.validate()
    classes = training_identities(labels)
    if not classes:
        raise ValueError("training split is empty")
    cls_index = {c: i for i, c in enumerate(classes)}
    f_ids = protocol_ids(bank_f, labels, "train")
    v_ids = protocol_ids(bank_v, labels, "train")
    if len(f_ids) < 2:
        raise ValueError("need at least two training face instances")
    F = bank_f.rows(f_ids)
    V = bank_v.rows(v_ids)
    y_f = np.array([cls_index[labels.identity(i)] for i in f_ids])
    voice_pool: dict[int, np.ndarray] = {}
    y_v = np.array([cls_index[labels.identity(i)] for i in v_ids])
    for c in range(len(classes)):
        voice_pool[c] = np.flatnonzero(y_v == c)
    if any(len(p) == 0 for p in voice_pool.values()):
        raise ValueError("every training identity needs at least one voice instance")

    rng = make_rng(cfg.seed)
    dims = ModelDims(bank_f.dim, bank_v.dim, cfg.d, len(classes))
    params = init_params(dims, rng, cfg.fusion, cfg.att_depth)
    state = AdamState.zeros_like(params)
    centers = np.zeros((len(classes), cfg.d)) if cfg.loss in ("center", "git") else None

    val_trials = None
    val_f = bank_f.subset(protocol_ids(bank_f, labels, "val"))
    val_v = bank_v.subset(protocol_ids(bank_v, labels, "val"))
    if len(val_f) and len(val_v):
        try:
            val_trials = make_trials(val_f, val_v, labels, "none", cfg.val_neg_per_pos,
                                     make_rng(cfg.seed + 7919))
        except TrialError:
            val_trials = None

    result = TrainResult(params, classes=classes)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(f_ids))
        vsel = np.array([voice_pool[y_f[i]][rng.integers(len(voice_pool[y_f[i]]))] for i in order])
        tot = ce_tot = oc_tot = 0.0
        nb = 0
        for bi, sl in enumerate(_batches(len(order), cfg.batch_size)):
            idx, vidx = order[sl], vsel[sl]
            y = y_f[idx]
            cache = forward(params, F[idx], V[vidx])
            out, centers_new = model_loss(cache, y, cfg, centers)
            oc_val = out.diag.get("oc")
            if oc_val is None:
                oc_val = L.oc_loss(cache.l, y, cfg.oc_reduction).value
            ce_val = out.diag.get("ce")
            if ce_val is None:
                ce_val = L.ce_loss(cache.logits, y).value
            if not math.isfinite(out.value):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {bi}: "
                                   f"loss={out.value} ce={ce_val} oc={oc_val}")
            grads = backward(params, cache, out.grads)
            adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            centers = centers_new
            tot += out.value
            ce_tot += ce_val
            oc_tot += oc_val
            nb += 1
        val_eer = float("nan")
        if val_trials is not None:
            val_eer = verify_metrics(score_trials(params, val_f, val_v, val_trials))["eer"]
        rec = EpochRecord(epoch, tot / nb, ce_tot / nb, oc_tot / nb, val_eer, lr)
        log.debug("epoch %d loss %.5f val_eer %.4f", epoch, rec.loss, val_eer)
        result.history.append(rec)
    return result


def write_history(history: list[EpochRecord], path) -> None:
    from .evalsuite import write_csv

    names = [f.name for f in fields(EpochRecord)]
    write_csv(path, names, ([getattr(r, n) for n in names] for r in history))
