"""Wall-clock scaling of each training loss with the number of instances.

Per-batch losses (ce, joint/ours, center, git) are timed over one full pass
of ``n`` instances in mini-batches. Contrastive loss enumerates all ``n^2``
cross-modal pairs and triplet loss all ``n^3`` (anchor, positive, negative)
candidates, which is the mining cost the slopes are meant to expose.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import losses as L
from . import numcore as nc

BENCH_KINDS = ("ce", "ours", "center", "git", "contrastive", "triplet")
DEFAULT_N = {
    "ce": (1024, 2048, 4096, 8192),
    "ours": (1024, 2048, 4096, 8192),
    "center": (1024, 2048, 4096, 8192),
    "git": (1024, 2048, 4096, 8192),
    "contrastive": (512, 1024, 2048, 4096),
    "triplet": (96, 128, 192, 256),
}
SLOPE_BRACKETS = {
    "ce": (0.8, 1.3), "ours": (0.8, 1.3), "center": (0.8, 1.3), "git": (0.8, 1.3),
    "contrastive": (1.7, 2.4), "triplet": (2.5, 3.5),
}


@dataclass
class BenchReport:
    loss: str
    n: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    reps: list[int] = field(default_factory=list)
    slope: float = float("nan")


@dataclass
class _Workload:
    u: np.ndarray
    v: np.ndarray
    l: np.ndarray
    logits: np.ndarray
    y: np.ndarray
    centers: np.ndarray


def make_workload(n: int, rng: np.random.Generator, d: int = 64, n_classes: int = 64) -> _Workload:
    y = np.arange(n) % n_classes
    rng.shuffle(y)
    return _Workload(
        u=nc.l2_normalize(rng.normal(size=(n, d))),
        v=nc.l2_normalize(rng.normal(size=(n, d))),
        l=np.tanh(rng.normal(size=(n, d))),
        logits=rng.normal(size=(n, n_classes)),
        y=y,
        centers=rng.normal(0, 0.1, size=(n_classes, d)),
    )


def one_pass(kind: str, w: _Workload, batch_size: int = 128) -> None:
    n = len(w.y)
    if kind == "contrastive":
        L.contrastive_loss(w.u, w.v, w.y, w.y, 0.5)
        return
    if kind == "triplet":
        L.triplet_enumerate(w.u, w.v, w.y, w.y, 0.3)
        return
    centers = w.centers
    for s in range(0, n, batch_size):
        sl = slice(s, s + batch_size)
        if sl.stop - s < 2:
            break
        L.ce_loss(w.logits[sl], w.y[sl])
        if kind == "ours":
            L.oc_loss(w.l[sl], w.y[sl])
        elif kind == "center":
            _, centers = L.center_loss(w.l[sl], w.y[sl], centers)
        elif kind == "git":
            _, centers = L.git_loss(w.l[sl], w.y[sl], centers)
        elif kind != "ce":
            raise ValueError(f"unknown bench kind {kind!r}")


def time_call(fn, reps: int = 5, min_time: float = 0.02) -> tuple[float, int]:
    """Median seconds per call over ``reps`` timed runs after one warm-up.

    Calls shorter than ``min_time`` are looped ``inner`` times per run, with
    ``inner`` doubled until one run takes at least ``min_time``.
    """
    fn()
    inner = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        if time.perf_counter() - t0 >= min_time or inner >= 1 << 16:
            break
        inner *= 2
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - t0) / inner)
    return float(np.median(samples)), inner


def loglog_slope(n, seconds) -> float:
    return float(np.polyfit(np.log(n), np.log(seconds), 1)[0])


def bench(kind: str, n_values=None, reps: int = 5, rng: np.random.Generator | None = None,
          batch_size: int = 128) -> BenchReport:
    if kind not in BENCH_KINDS:
        raise ValueError(f"unknown bench kind {kind!r}")
    n_values = list(DEFAULT_N[kind] if n_values is None else n_values)
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n values must be strictly increasing")
    rng = nc.make_rng(0) if rng is None else rng
    rep = BenchReport(kind)
    for n in n_values:
        w = make_workload(n, rng)
        with threadpool_limits(1):
            sec, inner = time_call(lambda: one_pass(kind, w, batch_size), reps)
        rep.n.append(n)
        rep.seconds.append(sec)
        rep.reps.append(reps * inner)
    if len(n_values) >= 2:
        rep.slope = loglog_slope(rep.n, rep.seconds)
    return rep


def compare_at(n: int, kinds=("ours", "contrastive", "triplet"), reps: int = 5,
               rng: np.random.Generator | None = None) -> dict[str, float]:
    """Median seconds per pass of each loss at one common ``n``."""
    rng = nc.make_rng(0) if rng is None else rng
    w = make_workload(n, rng)
    with threadpool_limits(1):
        return {k: time_call(lambda k=k: one_pass(k, w), reps)[0] for k in kinds}


def report_rows(reports: list[BenchReport]):
    for r in reports:
        for n, s in zip(r.n, r.seconds):
            yield [r.loss, n, s, r.slope]
