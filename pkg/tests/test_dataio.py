import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fopkit import dataio as io
from fopkit.numcore import make_rng


def _bank(rng, n=16, dim=8, modality="face"):
    return io.EmbeddingBank(modality, tuple(f"x{i}" for i in range(n)), rng.normal(size=(n, dim)))


def test_bank_round_trip_bit_exact(tmp_path, rng):
    bank = _bank(rng)
    io.write_bank(bank, tmp_path / "b.fvb")
    back = io.read_bank(tmp_path / "b.fvb")
    assert back.ids == bank.ids and back.modality == "face"
    assert back.vectors.tobytes() == bank.vectors.tobytes()
    assert (tmp_path / "b.fvb").read_text().startswith("FVBANK 1 16 8 face\n")


@settings(max_examples=30)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=3, max_size=3))
def test_bank_round_trip_any_float(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("b") / "b.fvb"
    bank = io.EmbeddingBank("voice", ("a",), np.array([vals]))
    io.write_bank(bank, path)
    assert io.read_bank(path).vectors.tobytes() == bank.vectors.tobytes()


def test_short_row_reports_line(tmp_path):
    p = tmp_path / "b.fvb"
    p.write_text("FVBANK 1 2 4 face\na 1 2 3 4\nb 1 2 3\n")
    with pytest.raises(io.FieldCountError) as exc:
        io.read_bank(p)
    assert exc.value.line == 3


@pytest.mark.parametrize("text,err,line", [
    ("FVBANK 1 2 2 face\na 1 2\na 3 4\n", io.DuplicateIdError, 3),
    ("FVBANK 2 1 2 face\na 1 2\n", io.HeaderError, 1),
    ("FVBANK 1 1 2 mouth\na 1 2\n", io.HeaderError, 1),
    ("FVBANK 1 1 2 face\na 1 nan\n", io.NonFiniteError, 2),
    ("FVBANK 1 1 2 face\na 1 inf\n", io.NonFiniteError, 2),
    ("FVBANK 1 1 2 face\na 1 2\ngarbage\n", io.FieldCountError, 3),
    ("FVBANK 1 2 2 face\na 1 2\n", io.FieldCountError, 3),
])
def test_malformed_banks(tmp_path, text, err, line):
    p = tmp_path / "b.fvb"
    p.write_text(text)
    with pytest.raises(err) as exc:
        io.read_bank(p)
    assert exc.value.line == line


def test_labels_minimal(tmp_path):
    (tmp_path / "l.txt").write_text("f1 alice f uk 18-30\nv1 alice f uk 18-30\n")
    (tmp_path / "s.txt").write_text("alice train\n")
    t = io.read_labels(tmp_path / "l.txt", tmp_path / "s.txt")
    assert t.rows["f1"] == io.LabelRow("alice", "f", "uk", "18-30")
    assert t.splits == {"alice": "train"}


def test_split_disjointness(tmp_path):
    (tmp_path / "s.txt").write_text("bob test_unseen\nbob train\n")
    with pytest.raises(io.SplitError):
        io.read_splits(tmp_path / "s.txt")
    (tmp_path / "s.txt").write_text("bob holdout\n")
    with pytest.raises(io.SplitError):
        io.read_splits(tmp_path / "s.txt")


def test_identity_missing_from_labels(tmp_path, rng):
    (tmp_path / "l.txt").write_text("x0 alice f uk a\n")
    (tmp_path / "s.txt").write_text("alice train\n")
    t = io.read_labels(tmp_path / "l.txt", tmp_path / "s.txt")
    with pytest.raises(io.MissingLabelError):
        t.check_bank(_bank(rng, n=2))
    (tmp_path / "s.txt").write_text("carol train\n")
    with pytest.raises(io.MissingLabelError):
        io.read_labels(tmp_path / "l.txt", tmp_path / "s.txt")


def _random_table(rng, n_rows=1000, n_ident=50):
    rows = {}
    for i in range(n_rows):
        k = int(rng.integers(n_ident))
        rows[f"inst{i:05d}"] = io.LabelRow(f"id{k}", "mf"[k % 2], f"n{k % 3}", f"a{k % 4}")
    splits = {f"id{k}": io.SPLITS[k % 4] for k in range(n_ident)}
    return io.LabelTable(rows, splits)


def test_label_table_round_trip(tmp_path, rng):
    t = _random_table(rng)
    io.write_labels(t, tmp_path / "l.txt", tmp_path / "s.txt")
    back = io.read_labels(tmp_path / "l.txt", tmp_path / "s.txt")
    assert back.rows == t.rows and back.splits == t.splits


def _two_ident_corpus(same_gender=True):
    rows, fv = {}, {}
    for k, ident in enumerate(["a", "b"]):
        g = "m" if same_gender or k == 0 else "f"
        for s in range(3):
            rows[f"{ident}_f{s}"] = io.LabelRow(ident, g, f"n{k}", f"a{k}")
            rows[f"{ident}_v{s}"] = io.LabelRow(ident, g, f"n{k}", f"a{k}")
    r = np.random.default_rng(0)
    face = io.EmbeddingBank("face", tuple(k for k in rows if "_f" in k), r.normal(size=(6, 3)))
    voice = io.EmbeddingBank("voice", tuple(k for k in rows if "_v" in k), r.normal(size=(6, 3)))
    return face, voice, io.LabelTable(rows, {"a": "test_unseen", "b": "test_unseen"})


def test_degenerate_stratum_matches_unstratified():
    face, voice, labels = _two_ident_corpus()
    a = io.make_trials(face, voice, labels, "none", 2, make_rng(5))
    b = io.make_trials(face, voice, labels, "G", 2, make_rng(5))
    key = lambda t: sorted(zip(t.face_ids, t.voice_ids, t.labels.tolist()))
    assert key(a) == key(b)


def test_gna_without_shared_attributes_errors():
    face, voice, labels = _two_ident_corpus()
    with pytest.raises(io.TrialError):
        io.make_trials(face, voice, labels, "GNA", 1, make_rng(0))


def test_stratified_negatives_share_attribute(small_corpus):
    c = small_corpus
    attrs = c.labels.attributes()
    col = {"G": 0, "N": 1, "A": 2}
    for stratum in ("G", "N", "A", "GNA"):
        t = io.make_trials(c.face, c.voice, c.labels, stratum, 3, make_rng(1))
        assert t.n_neg > 0
        for f, v, lab in zip(t.face_ids, t.voice_ids, t.labels):
            af, av = attrs[c.labels.identity(f)], attrs[c.labels.identity(v)]
            if lab:
                assert c.labels.identity(f) == c.labels.identity(v)
                continue
            assert c.labels.identity(f) != c.labels.identity(v)
            if stratum == "GNA":
                assert af == av
            else:
                assert af[col[stratum]] == av[col[stratum]]


def test_trials_seed_deterministic(small_corpus):
    c = small_corpus
    a = io.make_trials(c.face, c.voice, c.labels, "N", 2, make_rng(9))
    b = io.make_trials(c.face, c.voice, c.labels, "N", 2, make_rng(9))
    assert a.face_ids == b.face_ids and a.voice_ids == b.voice_ids
    assert a.n_neg == 2 * a.n_pos


def test_protocol_partitions(small_corpus):
    c = small_corpus
    train = set(io.protocol_ids(c.face, c.labels, "train"))
    seen = set(io.protocol_ids(c.face, c.labels, "seen"))
    unseen = set(io.protocol_ids(c.face, c.labels, "unseen"))
    assert not train & seen and not train & unseen
    unseen_idents = {c.labels.identity(i) for i in unseen}
    assert not unseen_idents & {c.labels.identity(i) for i in train}
    assert {c.labels.identity(i) for i in seen} <= {c.labels.identity(i) for i in train}
