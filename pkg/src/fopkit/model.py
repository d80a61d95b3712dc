"""FOP head forward pass: projections, L2 normalisation, gated fusion, logits.

All functions take row-batched inputs (``B x F`` face, ``B x V`` voice) and
also work on single 1-D vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numcore as nc

FUSIONS = ("gated", "linear")


@dataclass(frozen=True)
class ModelDims:
    face_dim: int
    voice_dim: int
    d: int
    n_classes: int


@dataclass
class FopParams:
    """Trainable tensors of the FOP head.

    Names: ``W_face``/``b_face`` (F x d, d), ``W_voice``/``b_voice`` (V x d, d),
    ``att_W{i}``/``att_b{i}`` for each attention layer (the last one maps to
    the d-dimensional gate; earlier ones are ReLU hidden layers of width d),
    and ``W_cls`` (d x C, no bias). Linear fusion carries no attention tensors.
    """

    dims: ModelDims
    fusion: str = "gated"
    att_depth: int = 1
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {self.fusion!r}")
        if self.att_depth < 1:
            raise ValueError("att_depth must be >= 1")

    def __getattr__(self, name):
        tensors = self.__dict__.get("tensors")
        if tensors is not None and name in tensors:
            return tensors[name]
        raise AttributeError(name)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        F, V, d, C = self.dims.face_dim, self.dims.voice_dim, self.dims.d, self.dims.n_classes
        out = {"W_face": (F, d), "b_face": (d,), "W_voice": (V, d), "b_voice": (d,)}
        if self.fusion == "gated":
            fan_in = 2 * d
            for i in range(self.att_depth):
                out[f"att_W{i}"] = (fan_in, d)
                out[f"att_b{i}"] = (d,)
                fan_in = d
        out["W_cls"] = (d, C)
        return out

    def check(self) -> None:
        want = self.shapes()
        if set(want) != set(self.tensors):
            raise nc.ShapeError(f"tensor names {sorted(self.tensors)} != {sorted(want)}")
        for k, shp in want.items():
            if self.tensors[k].shape != shp:
                raise nc.ShapeError(f"{k} has shape {self.tensors[k].shape}, expected {shp}")
            if not np.all(np.isfinite(self.tensors[k])):
                raise FloatingPointError(f"{k} contains non-finite values")

    def copy(self) -> "FopParams":
        return FopParams(self.dims, self.fusion, self.att_depth,
                         {k: v.copy() for k, v in self.tensors.items()})

    @property
    def n_att(self) -> int:
        return self.att_depth if self.fusion == "gated" else 0


def glorot_bound(shape) -> float:
    fan_in, fan_out = shape
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(dims: ModelDims, rng: np.random.Generator, fusion: str = "gated",
                att_depth: int = 1, scheme: str = "glorot_uniform") -> FopParams:
    if scheme != "glorot_uniform":
        raise ValueError(f"unknown init scheme {scheme!r}")
    p = FopParams(dims, fusion, att_depth)
    for name, shape in p.shapes().items():
        if len(shape) == 1:
            p.tensors[name] = np.zeros(shape)
        else:
            a = glorot_bound(shape)
            p.tensors[name] = rng.uniform(-a, a, size=shape)
    return p


# ---------------------------------------------------------------- forward


def project(params: FopParams, b, e):
    """Face/voice projections followed by L2 normalisation; returns ``(u, v)``."""
    b = np.asarray(b, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if b.shape[-1] != params.dims.face_dim or e.shape[-1] != params.dims.voice_dim:
        raise nc.ShapeError(f"inputs {b.shape}/{e.shape} do not match dims "
                            f"F={params.dims.face_dim} V={params.dims.voice_dim}")
    u = nc.l2_normalize(b @ params.W_face + params.b_face)
    v = nc.l2_normalize(e @ params.W_voice + params.b_voice)
    return u, v


def project_face(params: FopParams, b) -> np.ndarray:
    return nc.l2_normalize(np.asarray(b, dtype=np.float64) @ params.W_face + params.b_face)


def project_voice(params: FopParams, e) -> np.ndarray:
    return nc.l2_normalize(np.asarray(e, dtype=np.float64) @ params.W_voice + params.b_voice)


def attention_gate(params: FopParams, u, v) -> np.ndarray:
    h = np.concatenate([u, v], axis=-1)
    last = params.att_depth - 1
    for i in range(params.att_depth):
        z = h @ params.tensors[f"att_W{i}"] + params.tensors[f"att_b{i}"]
        h = nc.sigmoid(z) if i == last else np.maximum(z, 0.0)
    return h


def fuse_gated(params: FopParams, u, v):
    """``k = sigmoid(F_att([u, v]))``, ``l = k*tanh(u) + (1-k)*tanh(v)``; returns ``(l, k)``."""
    k = attention_gate(params, u, v)
    return k * nc.tanh(u) + (1.0 - k) * nc.tanh(v), k


def fuse_linear(u, v) -> np.ndarray:
    return 0.5 * (nc.tanh(u) + nc.tanh(v))


def logits(params: FopParams, l) -> np.ndarray:
    return np.asarray(l, dtype=np.float64) @ params.W_cls


def fuse(params: FopParams, u, v) -> np.ndarray:
    if params.fusion == "gated":
        return fuse_gated(params, u, v)[0]
    return fuse_linear(u, v)


@dataclass
class ForwardCache:
    b: np.ndarray
    e: np.ndarray
    pu: np.ndarray       # pre-normalisation projections
    pv: np.ndarray
    u: np.ndarray
    v: np.ndarray
    att_in: list         # input to each attention layer; att_in[0] is [u, v]
    att_pre: list        # pre-activation of each attention layer
    k: np.ndarray
    tu: np.ndarray
    tv: np.ndarray
    l: np.ndarray
    logits: np.ndarray


def forward(params: FopParams, b, e) -> ForwardCache:
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    e = np.atleast_2d(np.asarray(e, dtype=np.float64))
    if b.shape[0] != e.shape[0]:
        raise nc.ShapeError(f"face batch {b.shape} and voice batch {e.shape} differ in size")
    if b.shape[1] != params.dims.face_dim or e.shape[1] != params.dims.voice_dim:
        raise nc.ShapeError(f"inputs {b.shape}/{e.shape} do not match dims "
                            f"F={params.dims.face_dim} V={params.dims.voice_dim}")
    pu = b @ params.W_face + params.b_face
    pv = e @ params.W_voice + params.b_voice
    u, v = nc.l2_normalize(pu), nc.l2_normalize(pv)
    att_in, att_pre = [], []
    if params.fusion == "gated":
        h = np.concatenate([u, v], axis=1)
        for i in range(params.att_depth):
            att_in.append(h)
            z = h @ params.tensors[f"att_W{i}"] + params.tensors[f"att_b{i}"]
            att_pre.append(z)
            h = nc.sigmoid(z) if i == params.att_depth - 1 else np.maximum(z, 0.0)
        k = h
    else:
        k = np.full_like(u, 0.5)
    tu, tv = np.tanh(u), np.tanh(v)
    l = k * tu + (1.0 - k) * tv
    return ForwardCache(b, e, pu, pv, u, v, att_in, att_pre, k, tu, tv, l, l @ params.W_cls)


# ---------------------------------------------------------------- checkpoints


def _fmt_row(row) -> str:
    return " ".join(repr(float(x)) for x in row)


def write_checkpoint(params: FopParams, path) -> None:
    d = params.dims
    lines = [f"FVCKPT 1 {d.face_dim} {d.voice_dim} {d.d} {d.n_classes} {params.fusion} {params.att_depth}"]
    for name, shape in params.shapes().items():
        t = params.tensors[name].reshape(shape[0], -1) if len(shape) == 2 else params.tensors[name][None, :]
        lines.append(f"TENSOR {name} {t.shape[0]} {t.shape[1]}")
        lines.extend(_fmt_row(r) for r in t)
    Path(path).write_text("\n".join(lines) + "\n")


def read_checkpoint(path) -> FopParams:
    from .dataio import FieldCountError, HeaderError, NonFiniteError

    lines = Path(path).read_text().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    head = lines[0].split() if lines else []
    if len(head) != 8 or head[:2] != ["FVCKPT", "1"] or head[6] not in FUSIONS:
        raise HeaderError(f"bad checkpoint header {lines[:1]}", 1, path)
    F, V, dd, C, depth = (int(x) for x in (*head[2:6], head[7]))
    p = FopParams(ModelDims(F, V, dd, C), head[6], depth)
    want = p.shapes()
    i = 1
    while i < len(lines):
        toks = lines[i].split()
        if len(toks) != 4 or toks[0] != "TENSOR" or toks[1] not in want:
            raise HeaderError(f"bad tensor header {lines[i]!r}", i + 1, path)
        name, r, c = toks[1], int(toks[2]), int(toks[3])
        block = np.empty((r, c))
        for j in range(r):
            lineno = i + 2 + j
            if lineno > len(lines):
                raise FieldCountError(f"tensor {name} truncated", lineno, path)
            vals = lines[lineno - 1].split()
            if len(vals) != c:
                raise FieldCountError(f"expected {c} values, got {len(vals)}", lineno, path)
            block[j] = [float(x) for x in vals]
            if not np.all(np.isfinite(block[j])):
                raise NonFiniteError(f"non-finite value in {name}", lineno, path)
        p.tensors[name] = block.reshape(want[name])
        i += 1 + r
    p.check()
    return p
