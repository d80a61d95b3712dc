"""Training objectives with analytic gradients.

Every loss returns a :class:`LossOutput` whose ``grads`` dict is keyed by the
name of the input it differentiates (``"logits"``, ``"l"``, ``"u"``, ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc

DIST_EPS = 1e-12


@dataclass
class LossOutput:
    value: float
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    diag: dict[str, float] = field(default_factory=dict)


class LossContractError(ValueError):
    pass


def _labels(labels) -> np.ndarray:
    return np.asarray(labels, dtype=np.int64).reshape(-1)


# ---------------------------------------------------------------- CE


def ce_loss(logits, labels) -> LossOutput:
    """Mean softmax cross-entropy over the batch."""
    z = nc.as_matrix(logits, "logits")
    y = _labels(labels)
    B = z.shape[0]
    if B < 1 or y.shape[0] != B:
        raise LossContractError(f"logits {z.shape} vs {y.shape[0]} labels")
    logp = nc.log_softmax(z)
    value = float(-np.mean(logp[np.arange(B), y]))
    g = np.exp(logp)
    g[np.arange(B), y] -= 1.0
    return LossOutput(value, {"logits": g / B}, {"ce": value})


# ---------------------------------------------------------------- OC


def _norm_backward(x: np.ndarray, n: np.ndarray, dn: np.ndarray, eps: float = nc.EPS) -> np.ndarray:
    """Gradient through ``n = x / max(||x||, eps)`` row-wise."""
    r = nc.norms(x)
    big = r >= eps
    proj = dn - n * np.sum(n * dn, axis=-1, keepdims=True)
    return np.where(big, proj / np.maximum(r, eps), dn / eps)


def pair_masks(labels) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangular (i < j) masks of same-identity and different-identity pairs."""
    y = _labels(labels)
    same = y[:, None] == y[None, :]
    upper = np.triu(np.ones_like(same), k=1)
    return same & upper, ~same & upper


def oc_loss(l, labels, reduction: str = "mean") -> LossOutput:
    """Orthogonality constraint on fused embeddings.

    ``mean``: ``(1 - mean_same cos) + |mean_diff cos|`` over pairs i < j;
    a term whose pair set is empty contributes 0. ``sum``: the sums replace
    the means and the leading ``1`` is applied once (present only when the
    batch has same-identity pairs).
    """
    x = nc.as_matrix(l, "l")
    y = _labels(labels)
    B = x.shape[0]
    if B < 2:
        raise LossContractError(f"orthogonality loss needs B >= 2, got {B}")
    if y.shape[0] != B:
        raise LossContractError(f"{B} embeddings vs {y.shape[0]} labels")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    n = nc.l2_normalize(x)
    # no clamp here: the gradient must match the value exactly
    G = n @ n.T
    S, D = pair_masks(y)
    ns, nd = int(S.sum()), int(D.sum())
    s_sum = float(G[S].sum())
    d_sum = float(G[D].sum())
    if reduction == "mean":
        ws = 1.0 / ns if ns else 0.0
        wd = 1.0 / nd if nd else 0.0
    else:
        ws = 1.0 if ns else 0.0
        wd = 1.0 if nd else 0.0
    same_term = (1.0 - ws * s_sum) if ns else 0.0
    diff_inner = wd * d_sum
    value = same_term + abs(diff_inner)
    M = -ws * S + np.sign(diff_inner) * wd * D
    dn = (M + M.T) @ n
    g = _norm_backward(x, n, dn)
    return LossOutput(value, {"l": g}, {
        "oc": value, "oc_same": same_term, "oc_diff": abs(diff_inner),
        "n_same": ns, "n_diff": nd,
    })


def joint_loss(logits, l, labels, alpha: float = 1.0, reduction: str = "mean") -> LossOutput:
    """``CE + alpha * OC``."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    ce = ce_loss(logits, labels)
    oc = oc_loss(l, labels, reduction)
    diag = {"ce": ce.value, **oc.diag}
    if alpha == 0:
        return LossOutput(ce.value, {"logits": ce.grads["logits"]}, diag)
    return LossOutput(ce.value + alpha * oc.value,
                      {"logits": ce.grads["logits"], "l": alpha * oc.grads["l"]}, diag)


# ---------------------------------------------------------------- contrastive


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(sq, 0.0)


def contrastive_loss(u, v, y_u, y_v=None, margin: float = 0.5, mode: str = "all_pairs") -> LossOutput:
    """Cross-modal contrastive loss.

    ``all_pairs`` enumerates every (u_i, v_j); ``paired`` uses only the rows
    (u_i, v_i). Positives add ``d^2``, negatives ``max(0, margin - d)^2``,
    ``d`` Euclidean; the value is the mean over the considered pairs.
    """
    u = nc.as_matrix(u, "u")
    v = nc.as_matrix(v, "v")
    y_u = _labels(y_u)
    y_v = y_u if y_v is None else _labels(y_v)
    if mode == "paired":
        if u.shape != v.shape:
            raise nc.ShapeError(f"paired mode needs equal shapes, got {u.shape} {v.shape}")
        diff = u - v
        d = np.sqrt(np.sum(diff * diff, 1))
        pos = y_u == y_v
        hinge = np.maximum(0.0, margin - d)
        per = np.where(pos, d * d, hinge * hinge)
        P = len(d)
        coef = np.where(pos, 2.0, -2.0 * hinge / np.maximum(d, DIST_EPS)) / P
        gu = coef[:, None] * diff
        return LossOutput(float(per.sum() / P), {"u": gu, "v": -gu}, {"n_pairs": P})
    if mode != "all_pairs":
        raise ValueError(f"unknown mode {mode!r}")
    sq = _sq_dists(u, v)
    d = np.sqrt(sq)
    pos = y_u[:, None] == y_v[None, :]
    hinge = np.maximum(0.0, margin - d)
    P = d.size
    value = float(np.where(pos, sq, hinge * hinge).sum() / P)
    # dL/d(u_i - v_j) = coef_ij * (u_i - v_j)
    coef = np.where(pos, 2.0, -2.0 * hinge / np.maximum(d, DIST_EPS)) / P
    gu = coef.sum(1)[:, None] * u - coef @ v
    gv = coef.sum(0)[:, None] * v - coef.T @ u
    return LossOutput(value, {"u": gu, "v": gv}, {"n_pairs": P, "n_pos": int(pos.sum())})


# ---------------------------------------------------------------- triplet


def triplet_loss(anchors, positives, negatives, margin: float = 0.3) -> LossOutput:
    """Mean of ``max(0, d(a,p) - d(a,n) + margin)`` over explicit triplets."""
    a = nc.as_matrix(anchors, "anchors")
    p = nc.as_matrix(positives, "positives")
    n = nc.as_matrix(negatives, "negatives")
    dp_vec, dn_vec = a - p, a - n
    dp = np.sqrt(np.sum(dp_vec ** 2, 1))
    dn = np.sqrt(np.sum(dn_vec ** 2, 1))
    h = dp - dn + margin
    T = len(h)
    active = (h > 0).astype(np.float64) / T
    gp_dir = dp_vec / np.maximum(dp, DIST_EPS)[:, None]
    gn_dir = dn_vec / np.maximum(dn, DIST_EPS)[:, None]
    ga = active[:, None] * (gp_dir - gn_dir)
    return LossOutput(float(np.maximum(h, 0).sum() / T),
                      {"anchors": ga, "positives": -active[:, None] * gp_dir,
                       "negatives": active[:, None] * gn_dir},
                      {"n_triplets": T, "n_active": int((h > 0).sum())})


def triplet_enumerate(u, v, y_u, y_v=None, margin: float = 0.3, chunk: int = 16) -> LossOutput:
    """Triplet loss over every (anchor u_a, positive v_p, negative v_n).

    Valid triplets have ``y_v[p] == y_u[a] != y_v[n]``. The value is the mean
    hinge over valid triplets. Work is O(n^3); anchors are processed in
    chunks to bound memory.
    """
    u = nc.as_matrix(u, "u")
    v = nc.as_matrix(v, "v")
    y_u = _labels(y_u)
    y_v = y_u if y_v is None else _labels(y_v)
    d = np.sqrt(_sq_dists(u, v))
    same = y_u[:, None] == y_v[None, :]
    n_valid = int((same.sum(1) * (~same).sum(1)).sum())
    if n_valid == 0:
        return LossOutput(0.0, {"u": np.zeros_like(u), "v": np.zeros_like(v)}, {"n_triplets": 0, "n_active": 0})
    total = 0.0
    n_active = 0
    cP = np.zeros_like(d)   # per (a, p): number of active triplets through that positive
    cN = np.zeros_like(d)   # per (a, n)
    for s in range(0, len(u), chunk):
        sl = slice(s, s + chunk)
        h = d[sl, :, None] - d[sl, None, :] + margin
        valid = same[sl, :, None] & ~same[sl, None, :]
        act = valid & (h > 0)
        total += float(np.where(act, h, 0.0).sum())
        n_active += int(act.sum())
        cP[sl] = act.sum(2)
        cN[sl] = act.sum(1)
    cP /= n_valid
    cN /= n_valid
    # d(d_ap)/du_a = (u_a - v_p)/d_ap
    wP = cP / np.maximum(d, DIST_EPS)
    wN = cN / np.maximum(d, DIST_EPS)
    W = wP - wN
    gu = W.sum(1)[:, None] * u - W @ v
    gv = W.sum(0)[:, None] * v - W.T @ u
    return LossOutput(total / n_valid, {"u": gu, "v": gv}, {"n_triplets": n_valid, "n_active": n_active})


# ---------------------------------------------------------------- center / git


def center_update(l, labels, centers, lambda_c: float) -> np.ndarray:
    """Per-class center step: ``c_j -= lambda_c * sum_{y_i=j}(c_j - l_i) / (1 + n_j)``."""
    x = nc.as_matrix(l, "l")
    y = _labels(labels)
    c = np.array(centers, dtype=np.float64, copy=True)
    delta = np.zeros_like(c)
    counts = np.bincount(y, minlength=len(c)).astype(np.float64)
    np.add.at(delta, y, c[y] - x)
    return c - lambda_c * delta / (1.0 + counts)[:, None]


def center_loss(l, labels, centers, lambda_c: float = 0.5) -> tuple[LossOutput, np.ndarray]:
    """``0.5 * mean ||l_i - c_{y_i}||^2``; returns the loss and the updated centers."""
    x = nc.as_matrix(l, "l")
    y = _labels(labels)
    c = np.asarray(centers, dtype=np.float64)
    diff = x - c[y]
    B = len(x)
    value = float(0.5 * np.sum(diff * diff) / B)
    out = LossOutput(value, {"l": diff / B}, {"center": value})
    return out, center_update(x, y, c, lambda_c)


def git_loss(l, labels, centers, lambda_c: float = 0.5, lambda_g: float = 0.1) -> tuple[LossOutput, np.ndarray]:
    """Center loss plus ``lambda_g * mean_{j != y_i} 1 / (1 + ||l_i - c_j||^2)``."""
    x = nc.as_matrix(l, "l")
    y = _labels(labels)
    c = np.asarray(centers, dtype=np.float64)
    base, new_centers = center_loss(x, y, c, lambda_c)
    B, C = len(x), len(c)
    foreign = np.ones((B, C), dtype=bool)
    foreign[np.arange(B), y] = False
    count = int(foreign.sum())
    if count == 0:
        push = 0.0
        g_push = np.zeros_like(x)
    else:
        sq = np.sum((x[:, None, :] - c[None, :, :]) ** 2, -1)
        inv = np.where(foreign, 1.0 / (1.0 + sq), 0.0)
        push = float(inv.sum() / count)
        # d/dl_i of 1/(1+s) with s = ||l_i - c_j||^2 is -2 (l_i - c_j) / (1+s)^2
        w = -2.0 * inv * inv / count
        g_push = w.sum(1)[:, None] * x - w @ c
    value = base.value + lambda_g * push
    out = LossOutput(value, {"l": base.grads["l"] + lambda_g * g_push},
                     {"center": base.value, "git_push": push})
    return out, new_centers
