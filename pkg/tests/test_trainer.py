import math
from dataclasses import replace

import numpy as np
import pytest

from fopkit.gradcheck import check_model, rel_error, toy_problem
from fopkit.model import ModelDims, forward, init_params
from fopkit.numcore import make_rng
from fopkit.synthgen import SynthConfig, generate
from fopkit.trainer import (LOSS_KINDS, AdamState, NumericError, TrainConfig, _batches, adam_step,
                            backward, model_loss, train)


@pytest.mark.parametrize("loss", LOSS_KINDS)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_model_gradcheck(loss, seed):
    err, where = check_model(loss, seed)
    assert err <= 1e-4, (loss, where, err)


@pytest.mark.parametrize("variant", [dict(fusion="linear"), dict(att_depth=2), dict(oc_reduction="sum")])
def test_model_gradcheck_variants(variant):
    cfg = replace(TrainConfig(), **variant)
    for seed in range(3):
        err, where = check_model("joint", seed, cfg)
        assert err <= 1e-4, (variant, where, err)


def test_zero_upstream_gives_zero_grads():
    params, b, e, y, _ = toy_problem(0)
    cache = forward(params, b, e)
    g = backward(params, cache, {"logits": np.zeros_like(cache.logits)})
    assert all(not np.any(t) for t in g.values())


def test_oc_gradient_scales_with_alpha():
    params, b, e, y, _ = toy_problem(4)
    cache = forward(params, b, e)
    cfg1 = replace(TrainConfig(), alpha=1.0)
    cfg2 = replace(TrainConfig(), alpha=2.0)
    g1 = model_loss(cache, y, cfg1)[0].grads
    g2 = model_loss(cache, y, cfg2)[0].grads
    assert np.array_equal(g1["logits"], g2["logits"])
    oc1 = backward(params, cache, {"l": g1["l"]})
    oc2 = backward(params, cache, {"l": g2["l"]})
    for k in oc1:
        assert rel_error(2 * oc1[k], oc2[k]) <= 1e-12


# ---------------------------------------------------------------- Adam


def _one_tensor(x):
    params = init_params(ModelDims(2, 2, 2, 2), make_rng(0))
    for k in params.tensors:
        params.tensors[k] = np.zeros_like(params.tensors[k])
    params.tensors["W_cls"] = np.array(x, dtype=float)
    return params


def test_adam_first_step_is_lr():
    p = _one_tensor([[1.0, -2.0], [3.0, 0.5]])
    state = AdamState.zeros_like(p)
    g = {"W_cls": np.array([[0.3, -7.0], [1e-3, 2.0]])}
    adam_step(p, g, state, lr=0.01)
    step = np.array([[1.0, -2.0], [3.0, 0.5]]) - p.W_cls
    assert np.allclose(np.abs(step), 0.01, rtol=1e-4)
    assert np.array_equal(np.sign(step), np.sign(g["W_cls"]))


def test_adam_zero_grad_no_change():
    p = _one_tensor([[1.0, 2.0], [3.0, 4.0]])
    state = AdamState.zeros_like(p)
    before = p.W_cls.copy()
    adam_step(p, {"W_cls": np.zeros((2, 2))}, state, lr=0.1)
    assert np.array_equal(before, p.W_cls)


def test_adam_quadratic_bowl():
    target = np.array([[0.5, -1.0], [2.0, 0.0]])
    p = _one_tensor([[3.0, 3.0], [-3.0, 3.0]])
    state = AdamState.zeros_like(p)
    f = []
    for _ in range(200):
        diff = p.W_cls - target
        f.append(float(np.sum(diff ** 2)))
        adam_step(p, {"W_cls": 2 * diff}, state, lr=0.05)
    assert all(b <= a for a, b in zip(f[5:100], f[6:101]))
    assert f[-1] < 1e-2 * f[0]


# ---------------------------------------------------------------- training loop


def test_batches_fold_single_tail():
    assert _batches(9, 4) == [slice(0, 4), slice(4, 9)]
    assert _batches(10, 4) == [slice(0, 4), slice(4, 8), slice(8, 10)]
    assert sum(s.stop - s.start for s in _batches(257, 128)) == 257


def test_lr_schedule():
    cfg = TrainConfig(lr=1e-3, lr_decay_per_epoch=0.95)
    assert [cfg.lr_at(t) for t in range(3)] == [1e-3, 1e-3 * 0.95, 1e-3 * 0.95 ** 2]


def test_config_validation():
    for bad in (dict(loss="hinge"), dict(batch_size=1), dict(lr_decay_per_epoch=0.0), dict(alpha=-1)):
        with pytest.raises(ValueError):
            replace(TrainConfig(), **bad).validate()


@pytest.fixture(scope="module")
def tiny():
    return generate(SynthConfig(n_identities=24, samples_per_identity=4, latent_dim=6,
                                face_dim=12, voice_dim=10, seed=5))


def test_training_deterministic(tiny):
    cfg = TrainConfig(d=16, epochs=3, batch_size=16, seed=11)
    a = train(tiny.face, tiny.voice, tiny.labels, cfg)
    b = train(tiny.face, tiny.voice, tiny.labels, cfg)
    for k in a.params.tensors:
        assert a.params.tensors[k].tobytes() == b.params.tensors[k].tobytes()
    assert a.history == b.history


def test_training_leaves_banks_untouched(tiny):
    before = (tiny.face.vectors.copy(), tiny.voice.vectors.copy())
    train(tiny.face, tiny.voice, tiny.labels, TrainConfig(d=8, epochs=1, batch_size=16))
    assert np.array_equal(before[0], tiny.face.vectors)
    assert np.array_equal(before[1], tiny.voice.vectors)


def test_history_records(tiny):
    cfg = TrainConfig(d=8, epochs=4, batch_size=16, lr_decay_per_epoch=0.5)
    h = train(tiny.face, tiny.voice, tiny.labels, cfg).history
    assert [r.epoch for r in h] == [0, 1, 2, 3]
    assert [r.lr for r in h] == [cfg.lr_at(t) for t in range(4)]
    for r in h:
        assert abs(r.loss - (r.ce_term + r.oc_term)) <= 1e-9
        assert 0.0 <= r.val_eer <= 1.0


def test_all_losses_train(tiny):
    for loss in LOSS_KINDS:
        h = train(tiny.face, tiny.voice, tiny.labels,
                  TrainConfig(d=8, epochs=2, batch_size=16, loss=loss)).history
        assert all(math.isfinite(r.loss) for r in h)


def test_ce_drops_below_chance():
    corpus = generate(SynthConfig(n_identities=64, samples_per_identity=6,
                                  split_fractions=(1.0, 0.0, 0.0, 0.0), seed=2))
    res = train(corpus.face, corpus.voice, corpus.labels, TrainConfig(d=32, epochs=20, batch_size=64))
    assert len(res.classes) == 64
    assert res.history[-1].ce_term < math.log(64)
    assert res.history[-1].ce_term < res.history[0].ce_term


def test_nonfinite_loss_raises(tiny, monkeypatch):
    import fopkit.trainer as T
    real = T.model_loss

    def poisoned(cache, labels, cfg, centers=None):
        out, c = real(cache, labels, cfg, centers)
        out.value = float("nan")
        return out, c

    monkeypatch.setattr(T, "model_loss", poisoned)
    with pytest.raises(NumericError, match="epoch 0 batch 0"):
        train(tiny.face, tiny.voice, tiny.labels, TrainConfig(d=8, epochs=1, batch_size=16))
