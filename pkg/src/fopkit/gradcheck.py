"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import FopParams, ModelDims, forward, init_params
from .numcore import make_rng
from .trainer import LOSS_KINDS, TrainConfig, backward, model_loss


@dataclass
class GradcheckResult:
    loss: str
    max_rel_err: float
    worst_tensor: str
    seeds: int


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)`` over one tensor."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def toy_problem(seed: int, face_dim=10, voice_dim=12, d=8, n_classes=3, batch=6,
                fusion="gated", att_depth=1):
    rng = make_rng(seed)
    params = init_params(ModelDims(face_dim, voice_dim, d, n_classes), rng, fusion, att_depth)
    for k in params.tensors:
        if k.startswith("b_") or k.startswith("att_b"):
            params.tensors[k] = rng.normal(0, 0.3, size=params.tensors[k].shape)
    b = rng.normal(size=(batch, face_dim))
    e = rng.normal(size=(batch, voice_dim))
    y = rng.permutation(np.arange(batch) % n_classes)
    centers = rng.normal(0, 0.5, size=(n_classes, d))
    return params, b, e, y, centers


def numeric_grads(params: FopParams, f, rel_step: float = 1e-5) -> dict[str, np.ndarray]:
    out = {}
    for k, t in params.tensors.items():
        g = np.zeros_like(t)
        flat, gflat = t.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            x0 = flat[i]
            h = rel_step * max(1.0, abs(x0))
            flat[i] = x0 + h
            fp = f()
            flat[i] = x0 - h
            fm = f()
            flat[i] = x0
            gflat[i] = (fp - fm) / (2 * h)
        out[k] = g
    return out


def check_model(loss: str, seed: int, cfg: TrainConfig | None = None, **toy) -> tuple[float, str]:
    cfg = replace(cfg or TrainConfig(), loss=loss)
    params, b, e, y, centers = toy_problem(seed, fusion=cfg.fusion, att_depth=cfg.att_depth, **toy)

    def value():
        return model_loss(forward(params, b, e), y, cfg, centers)[0].value

    cache = forward(params, b, e)
    out, _ = model_loss(cache, y, cfg, centers)
    analytic = backward(params, cache, out.grads)
    numeric = numeric_grads(params, value)
    errs = {k: rel_error(analytic[k], numeric[k]) for k in analytic}
    worst = max(errs, key=errs.get)
    return errs[worst], worst


def gradcheck(losses=LOSS_KINDS, seeds: int = 20, cfg: TrainConfig | None = None) -> list[GradcheckResult]:
    results = []
    for loss in losses:
        worst, where = 0.0, ""
        for s in range(seeds):
            err, name = check_model(loss, s, cfg)
            if err >= worst:
                worst, where = err, name
        results.append(GradcheckResult(loss, worst, where, seeds))
    return results
