"""Synthetic bimodal corpora with a shared identity latent.

Each identity ``c`` draws ``z_c ~ N(0, I_m)``. Two fixed random maps
``A_f`` (F x m) and ``A_v`` (V x m), with entries ``N(0, 1/m)``, turn the
latent into face and voice embeddings; every sample adds isotropic Gaussian
noise. The noise level is the single knob for cross-modal signal strength.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import EmbeddingBank, LabelRow, LabelTable, SPLITS
from .numcore import make_rng


@dataclass
class SynthConfig:
    n_identities: int = 96
    samples_per_identity: int = 10
    latent_dim: int = 16
    face_dim: int = 64
    voice_dim: int = 48
    noise_std: float = 0.05
    # per-modality overrides; None falls back to noise_std
    face_noise_std: float | None = None
    voice_noise_std: float | None = None
    # train, val, test_seen, test_unseen
    split_fractions: tuple[float, float, float, float] = (2 / 3, 1 / 12, 1 / 12, 1 / 6)
    genders: tuple[str, ...] = ("m", "f")
    nationalities: tuple[str, ...] = ("uk", "us", "in", "de", "ca")
    age_buckets: tuple[str, ...] = ("18-30", "30-45", "45-60", "60+")
    seed: int = 0

    def validate(self) -> None:
        if self.n_identities < 1 or self.samples_per_identity < 1 or self.latent_dim < 1:
            raise ValueError("counts must be >= 1")
        if min(self.latent_dim, self.face_dim, self.voice_dim) < 2:
            raise ValueError("dimensions must be >= 2")
        for s in (self.noise_std, self.face_noise_std, self.voice_noise_std):
            if s is not None and s < 0:
                raise ValueError("noise std must be >= 0")
        fr = self.split_fractions
        if len(fr) != 4 or min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be 4 non-negative values summing to 1, got {fr}")
        if not (self.genders and self.nationalities and self.age_buckets):
            raise ValueError("demographic vocabularies must be non-empty")


@dataclass
class SynthCorpus:
    face: EmbeddingBank
    voice: EmbeddingBank
    labels: LabelTable
    latents: np.ndarray = field(repr=False)
    face_map: np.ndarray = field(repr=False)
    voice_map: np.ndarray = field(repr=False)


def split_counts(n: int, fractions) -> list[int]:
    """Largest-remainder rounding of ``n * fractions``."""
    raw = [n * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (counts[i] - raw[i], i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def generate(cfg: SynthConfig) -> SynthCorpus:
    cfg.validate()
    rng = make_rng(cfg.seed)
    m, C, S = cfg.latent_dim, cfg.n_identities, cfg.samples_per_identity
    face_map = rng.normal(0.0, 1.0 / np.sqrt(m), size=(cfg.face_dim, m))
    voice_map = rng.normal(0.0, 1.0 / np.sqrt(m), size=(cfg.voice_dim, m))
    latents = rng.normal(size=(C, m))
    sf = cfg.noise_std if cfg.face_noise_std is None else cfg.face_noise_std
    sv = cfg.noise_std if cfg.voice_noise_std is None else cfg.voice_noise_std
    face = np.repeat(latents @ face_map.T, S, axis=0) + sf * rng.normal(size=(C * S, cfg.face_dim))
    voice = np.repeat(latents @ voice_map.T, S, axis=0) + sv * rng.normal(size=(C * S, cfg.voice_dim))

    idents = [f"id{c:04d}" for c in range(C)]
    g = rng.integers(len(cfg.genders), size=C)
    nat = rng.integers(len(cfg.nationalities), size=C)
    age = rng.integers(len(cfg.age_buckets), size=C)

    order = rng.permutation(C)
    splits: dict[str, str] = {}
    start = 0
    for name, count in zip(SPLITS, split_counts(C, cfg.split_fractions)):
        for c in sorted(order[start:start + count]):
            splits[idents[c]] = name
        start += count
    splits = {k: splits[k] for k in idents}

    face_ids = [f"{idents[c]}_f{s:03d}" for c in range(C) for s in range(S)]
    voice_ids = [f"{idents[c]}_v{s:03d}" for c in range(C) for s in range(S)]
    rows: dict[str, LabelRow] = {}
    for c in range(C):
        row = LabelRow(idents[c], cfg.genders[g[c]], cfg.nationalities[nat[c]], cfg.age_buckets[age[c]])
        for s in range(S):
            rows[face_ids[c * S + s]] = row
        for s in range(S):
            rows[voice_ids[c * S + s]] = row
    return SynthCorpus(
        face=EmbeddingBank("face", tuple(face_ids), face),
        voice=EmbeddingBank("voice", tuple(voice_ids), voice),
        labels=LabelTable(rows, splits),
        latents=latents,
        face_map=face_map,
        voice_map=voice_map,
    )
