"""``key = value`` run configuration files.

Keys are namespaced by section: ``synth.*`` (:class:`SynthConfig`),
``train.*`` (:class:`TrainConfig`), ``eval.*`` and ``paths.*``. ``#`` starts a
comment. Unknown keys are rejected. Tuple values are comma separated and
``none`` maps to ``None`` for optional fields.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .synthgen import SynthConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class EvalConfig:
    protocol: str = "unseen"
    n_neg_per_pos: int = 1
    trials_seed: int = 1234
    stratify: tuple[str, ...] = ("none", "G", "N", "A", "GNA")
    nc: tuple[int, ...] = (2, 4, 6, 8, 10)
    match_trials: int = 10000
    match_direction: str = "voice_probe"
    analytics_cap: int = 200000
    bench_reps: int = 5
    gradcheck_seeds: int = 20
    gradcheck_tol: float = 1e-4


@dataclass
class PathConfig:
    face_bank: str = "face.fvb"
    voice_bank: str = "voice.fvb"
    labels: str = "labels.txt"
    splits: str = "splits.txt"
    checkpoint: str = "model.ckpt"
    history: str = "history.csv"
    verify_csv: str = "verify.csv"
    roc_prefix: str = "roc_"
    match_csv: str = "match.csv"
    analytics_csv: str = "analytics.csv"
    bench_csv: str = "bench.csv"
    gradcheck_csv: str = "gradcheck.csv"


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathConfig = field(default_factory=PathConfig)

    def set(self, key: str, raw: str) -> None:
        section, _, name = key.partition(".")
        target = getattr(self, section, None) if section in ("synth", "train", "eval", "paths") else None
        if target is None or not name or name not in {f.name for f in dataclasses.fields(target)}:
            raise ConfigError(f"unknown config key {key!r}")
        hint = typing.get_type_hints(type(target))[name]
        try:
            setattr(target, name, _coerce(raw.strip(), hint))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None

    def items(self):
        for section in ("synth", "train", "eval", "paths"):
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                yield f"{section}.{f.name}", getattr(obj, f.name)

    def dumps(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.items())


def _coerce(raw: str, hint):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or (origin is not None and type(None) in args and origin is not tuple):
        inner = [a for a in args if a is not type(None)][0]
        return None if raw.lower() == "none" else _coerce(raw, inner)
    if origin is tuple:
        elem = args[0]
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return tuple(_coerce(p, elem) for p in parts)
    if hint is bool:
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError("expected a boolean")
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    if hint is str:
        return raw
    raise TypeError(f"unsupported field type {hint}")


def _render(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, cfg: RunConfig | None = None, origin: str = "<config>") -> RunConfig:
    cfg = RunConfig() if cfg is None else cfg
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        try:
            cfg.set(key.strip(), value)
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{lineno}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(), origin=str(path))
