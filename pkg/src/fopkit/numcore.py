"""Dense numeric primitives shared by every other module.

Matrices are plain float64 ``numpy`` arrays, row-major. Functions that take
"vectors" also accept a 2-D batch and then act row-wise along the last axis.

Randomness comes from ``numpy.random.Generator`` over PCG64, which is
seed-deterministic and produces the same stream on every platform.
"""

from __future__ import annotations

import numpy as np

EPS = 1e-12


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def norms(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1, keepdims=True))


def l2_normalize(v, eps: float = EPS) -> np.ndarray:
    """``v / max(||v||, eps)`` along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    return v / np.maximum(norms(v), eps)


def cosine(a, b, eps: float = EPS) -> float | np.ndarray:
    """Cosine similarity along the last axis, clamped to [-1, 1]."""
    c = np.sum(l2_normalize(a, eps) * l2_normalize(b, eps), axis=-1)
    c = np.clip(c, -1.0, 1.0)
    return float(c) if np.ndim(c) == 0 else c


def cosine_matrix(x, eps: float = EPS) -> np.ndarray:
    n = l2_normalize(x, eps)
    return np.clip(n @ n.T, -1.0, 1.0)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape
    x = x.reshape(-1)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.reshape(shape)


def tanh(x) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def hadamard(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard operands differ: {a.shape} vs {b.shape}")
    return a * b


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
