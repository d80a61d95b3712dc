"""Shared table/CSV output for the experiment scripts."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from fopkit.evalsuite import write_csv  # noqa: E402

METRICS = ("eer", "auc", "orthogonality", "same_sim", "diff_sim")


def summarize(runs: dict, out: str | None = None) -> None:
    """Print per-variant means and optionally write every run to CSV."""
    print(f"{'variant':>14} " + " ".join(f"{m:>13}" for m in METRICS))
    rows = []
    for name, rs in runs.items():
        means = [sum(r.metrics[m] for r in rs) / len(rs) for m in METRICS]
        print(f"{name:>14} " + " ".join(f"{v:13.4f}" for v in means))
        rows += [[name, r.seed, *(r.metrics[m] for m in METRICS)] for r in rs]
    if out:
        write_csv(out, ["variant", "seed", *METRICS], rows)
        print(f"wrote {out}")


def seeds_arg(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())
