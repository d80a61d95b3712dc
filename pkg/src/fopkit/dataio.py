"""Text file formats for embedding banks, label tables, split maps and trials.

Bank files::

    FVBANK 1 <n> <dim> <face|voice>
    <instance_id> <v1> ... <vdim>        (n lines)

Floats are written with ``repr`` (shortest string that parses back to the
same float64), so write followed by read is bit-exact.

Label files hold ``<instance_id> <identity> <gender> <nationality> <age_bucket>``
per line; split files hold ``<identity> <train|val|test_seen|test_unseen>``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MODALITIES = ("face", "voice")
SPLITS = ("train", "val", "test_seen", "test_unseen")
STRATA = ("none", "G", "N", "A", "GNA")


class DataError(ValueError):
    """Base class for malformed input files and inconsistent data."""

    def __init__(self, msg: str, line: int | None = None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {msg}" if where else msg)
        self.line = line


class HeaderError(DataError):
    pass


class FieldCountError(DataError):
    pass


class NonFiniteError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


class SplitError(DataError):
    pass


class MissingLabelError(DataError):
    pass


class TrialError(DataError):
    pass


# ---------------------------------------------------------------- banks


@dataclass(frozen=True)
class EmbeddingBank:
    modality: str
    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise DataError(f"unknown modality {self.modality!r}")
        vec = np.array(self.vectors, dtype=np.float64, copy=True)
        if vec.ndim != 2 or vec.shape[0] != len(self.ids):
            raise DataError(f"vectors shape {vec.shape} does not match {len(self.ids)} ids")
        if not np.all(np.isfinite(vec)):
            raise NonFiniteError("bank contains non-finite values")
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateIdError("duplicate instance ids in bank")
        vec.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.ids)})

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.ids)

    def index(self, instance_id: str) -> int:
        try:
            return self._index[instance_id]
        except KeyError:
            raise DataError(f"unknown instance id {instance_id!r} in {self.modality} bank") from None

    def rows(self, instance_ids) -> np.ndarray:
        return self.vectors[[self.index(i) for i in instance_ids]]

    def subset(self, instance_ids) -> "EmbeddingBank":
        instance_ids = list(instance_ids)
        return EmbeddingBank(self.modality, tuple(instance_ids), self.rows(instance_ids))


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_float(tok: str, lineno: int, path) -> float:
    try:
        x = float(tok)
    except ValueError:
        raise FieldCountError(f"not a number: {tok!r}", lineno, path) from None
    if not math.isfinite(x):
        raise NonFiniteError(f"non-finite value {tok!r}", lineno, path)
    return x


def write_bank(bank: EmbeddingBank, path) -> None:
    lines = [f"FVBANK 1 {len(bank)} {bank.dim} {bank.modality}"]
    for iid, row in zip(bank.ids, bank.vectors):
        lines.append(" ".join([iid, *map(_fmt, row)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_bank(path) -> EmbeddingBank:
    text = Path(path).read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise HeaderError("empty file", 1, path)
    head = lines[0].split()
    if len(head) != 5 or head[0] != "FVBANK" or head[1] != "1" or head[4] not in MODALITIES:
        raise HeaderError(f"bad header {lines[0]!r}", 1, path)
    try:
        n, dim = int(head[2]), int(head[3])
    except ValueError:
        raise HeaderError(f"bad counts in header {lines[0]!r}", 1, path) from None
    if n < 0 or dim < 1:
        raise HeaderError(f"bad counts in header {lines[0]!r}", 1, path)
    ids, seen = [], set()
    vec = np.empty((n, dim), dtype=np.float64)
    for r, line in enumerate(lines[1:]):
        lineno = r + 2
        if r >= n:
            raise FieldCountError(f"trailing content beyond the {n} declared rows", lineno, path)
        toks = line.split()
        if len(toks) != dim + 1:
            raise FieldCountError(f"expected {dim + 1} fields, got {len(toks)}", lineno, path)
        if toks[0] in seen:
            raise DuplicateIdError(f"duplicate instance id {toks[0]!r}", lineno, path)
        seen.add(toks[0])
        ids.append(toks[0])
        vec[r] = [_parse_float(t, lineno, path) for t in toks[1:]]
    if len(ids) != n:
        raise FieldCountError(f"header declares {n} rows, file has {len(ids)}", len(lines) + 1, path)
    return EmbeddingBank(head[4], tuple(ids), vec)


# ---------------------------------------------------------------- labels


@dataclass(frozen=True)
class LabelRow:
    identity: str
    gender: str
    nationality: str
    age: str


@dataclass
class LabelTable:
    rows: dict[str, LabelRow]
    splits: dict[str, str] = field(default_factory=dict)

    def identity(self, instance_id: str) -> str:
        try:
            return self.rows[instance_id].identity
        except KeyError:
            raise MissingLabelError(f"instance {instance_id!r} has no label row") from None

    def identities(self, split: str | None = None) -> list[str]:
        ids = sorted({r.identity for r in self.rows.values()})
        if split is None:
            return ids
        return [i for i in ids if self.splits.get(i) == split]

    def attributes(self) -> dict[str, tuple[str, str, str]]:
        """identity -> (gender, nationality, age bucket)."""
        out = {}
        for r in self.rows.values():
            out.setdefault(r.identity, (r.gender, r.nationality, r.age))
        return out

    def check_bank(self, bank: EmbeddingBank) -> None:
        for i, iid in enumerate(bank.ids):
            if iid not in self.rows:
                raise MissingLabelError(f"{bank.modality} instance {iid!r} missing from labels", i + 2)
            ident = self.rows[iid].identity
            if self.splits and ident not in self.splits:
                raise MissingLabelError(f"identity {ident!r} missing from split map")


def write_labels(table: LabelTable, path, split_path=None) -> None:
    lines = [f"{k} {r.identity} {r.gender} {r.nationality} {r.age}" for k, r in table.rows.items()]
    Path(path).write_text("\n".join(lines) + "\n")
    if split_path is not None:
        Path(split_path).write_text("".join(f"{k} {v}\n" for k, v in table.splits.items()))


def _content_lines(path):
    for lineno, line in enumerate(Path(path).read_text().split("\n"), start=1):
        if line.strip():
            yield lineno, line.split()


def read_splits(path) -> dict[str, str]:
    splits: dict[str, str] = {}
    for lineno, toks in _content_lines(path):
        if len(toks) != 2:
            raise FieldCountError(f"expected 2 fields, got {len(toks)}", lineno, path)
        ident, split = toks
        if split not in SPLITS:
            raise SplitError(f"unknown split token {split!r}", lineno, path)
        prev = splits.get(ident)
        if prev is not None and prev != split:
            raise SplitError(f"identity {ident!r} assigned to both {prev} and {split}", lineno, path)
        splits[ident] = split
    return splits


def read_labels(path, split_path=None) -> LabelTable:
    rows: dict[str, LabelRow] = {}
    for lineno, toks in _content_lines(path):
        if len(toks) != 5:
            raise FieldCountError(f"expected 5 fields, got {len(toks)}", lineno, path)
        if toks[0] in rows:
            raise DuplicateIdError(f"duplicate instance id {toks[0]!r}", lineno, path)
        rows[toks[0]] = LabelRow(*toks[1:])
    table = LabelTable(rows, read_splits(split_path) if split_path is not None else {})
    if table.splits:
        for ident in table.identities():
            if ident not in table.splits:
                raise MissingLabelError(f"identity {ident!r} missing from split map {split_path}")
    return table


# ---------------------------------------------------------------- protocol subsets


def _seen_halves(ids: list[str]) -> tuple[list[str], list[str]]:
    ids = sorted(ids)
    cut = (len(ids) + 1) // 2
    return ids[:cut], ids[cut:]


def protocol_ids(bank: EmbeddingBank, labels: LabelTable, part: str) -> list[str]:
    """Instance ids of ``bank`` belonging to a protocol partition.

    ``train``: all instances of train identities plus the first half (sorted
    by id) of each test_seen identity's instances. ``seen``: the second half
    of test_seen instances. ``val`` / ``unseen``: val / test_unseen identities.
    """
    by_ident: dict[str, list[str]] = {}
    for iid in bank.ids:
        by_ident.setdefault(labels.identity(iid), []).append(iid)
    out: list[str] = []
    for ident in sorted(by_ident):
        split = labels.splits.get(ident)
        members = by_ident[ident]
        if part == "train":
            if split == "train":
                out += sorted(members)
            elif split == "test_seen":
                out += _seen_halves(members)[0]
        elif part == "seen":
            if split == "test_seen":
                out += _seen_halves(members)[1]
        elif part == "val":
            if split == "val":
                out += sorted(members)
        elif part == "unseen":
            if split == "test_unseen":
                out += sorted(members)
        else:
            raise ValueError(f"unknown protocol part {part!r}")
    return out


def training_identities(labels: LabelTable) -> list[str]:
    """Identities that receive a classifier column (train + test_seen)."""
    return [i for i in labels.identities() if labels.splits.get(i) in ("train", "test_seen")]


# ---------------------------------------------------------------- trials


@dataclass
class TrialSet:
    face_ids: list[str]
    voice_ids: list[str]
    labels: np.ndarray
    scores: np.ndarray | None = None
    skipped_strata: int = 0

    def __len__(self):
        return len(self.face_ids)

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.labels))

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos


def _stratum_key(attrs: tuple[str, str, str], stratify: str):
    g, n, a = attrs
    return {"none": (), "G": (g,), "N": (n,), "A": (a,), "GNA": (g, n, a)}[stratify]


def make_trials(bank_f: EmbeddingBank, bank_v: EmbeddingBank, labels: LabelTable,
                stratify: str = "none", n_neg_per_pos: int = 1,
                rng: np.random.Generator | None = None) -> TrialSet:
    """Sample verification trials between every face instance and voices.

    Each face instance yields one positive (a uniformly drawn same-identity
    voice) and ``n_neg_per_pos`` negatives (voices of uniformly drawn other
    identities from the same demographic stratum). Strata holding fewer than
    two identities are dropped whole and counted in ``skipped_strata``.
    """
    if stratify not in STRATA:
        raise ValueError(f"unknown stratification {stratify!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    attrs = labels.attributes()
    voices: dict[str, list[str]] = {}
    for iid in bank_v.ids:
        voices.setdefault(labels.identity(iid), []).append(iid)
    faces: dict[str, list[str]] = {}
    for iid in bank_f.ids:
        faces.setdefault(labels.identity(iid), []).append(iid)
    idents = sorted(i for i in faces if i in voices)

    strata: dict[tuple, list[str]] = {}
    for ident in idents:
        strata.setdefault(_stratum_key(attrs[ident], stratify), []).append(ident)
    skipped = sum(1 for members in strata.values() if len(members) < 2)
    if skipped:
        log.warning("%d stratum/strata with fewer than 2 identities skipped (%s)", skipped, stratify)

    fid, vid, lab = [], [], []
    for ident in idents:
        members = strata[_stratum_key(attrs[ident], stratify)]
        if len(members) < 2:
            continue
        others = [m for m in members if m != ident]
        for f in faces[ident]:
            own = voices[ident]
            fid.append(f)
            vid.append(own[rng.integers(len(own))])
            lab.append(True)
            for _ in range(n_neg_per_pos):
                other = others[rng.integers(len(others))]
                pool = voices[other]
                fid.append(f)
                vid.append(pool[rng.integers(len(pool))])
                lab.append(False)
    trials = TrialSet(fid, vid, np.array(lab, dtype=bool), skipped_strata=skipped)
    if trials.n_pos == 0 or trials.n_neg == 0:
        raise TrialError(f"stratification {stratify!r} leaves no usable trials "
                         f"({trials.n_pos} positive, {trials.n_neg} negative)")
    return trials
