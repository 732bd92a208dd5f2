import math

import numpy as np
import pytest

from gridner.codec import decode_grid, encode_grid
from gridner.core import LabelSet, Sentence, ValidationError
from gridner.data import SynthSpec, build_vocab, gen_synthetic
from gridner.model import ModelConfig, init_params
from gridner.numerics import Tensor, make_rng
from gridner.train import (
    AdamWState,
    EpochRecord,
    NonFiniteGradient,
    TrainConfig,
    adamw_step,
    batch_losses,
    grid_from_probs,
    make_batch,
    predict_entities,
    train_epochs,
)


def scalar(value, grad=0.0):
    return {"p": Tensor(np.array([value]), grad=np.array([grad]))}


class TestAdamW:
    def test_zero_grads_no_decay(self):
        rng = make_rng(0)
        params = {"a": Tensor(rng.normal(size=(3, 2))), "b": Tensor(rng.normal(size=4))}
        before = {k: t.data.copy() for k, t in params.items()}
        for t in params.values():
            t.zero_grad()
        adamw_step(params, AdamWState(), TrainConfig())
        for k, t in params.items():
            np.testing.assert_array_equal(t.data, before[k])

    def test_decay_only(self):
        params = scalar(2.0)
        adamw_step(params, AdamWState(), TrainConfig(learning_rate=0.1, weight_decay=0.3))
        assert params["p"].data[0] == pytest.approx(2.0 * (1 - 0.1 * 0.3), abs=1e-15)

    def test_quadratic_converges(self):
        params = scalar(1.0)
        state, cfg = AdamWState(), TrainConfig(learning_rate=0.1)
        for _ in range(200):
            params["p"].grad = 2 * params["p"].data
            adamw_step(params, state, cfg)
        assert abs(params["p"].data[0]) < 1e-3

    def test_first_step_is_lr_sized(self):
        # bias correction makes the first update exactly lr * sign(g)
        params = scalar(0.0, grad=-7.0)
        adamw_step(params, AdamWState(), TrainConfig(learning_rate=0.01))
        assert params["p"].data[0] == pytest.approx(0.01, rel=1e-6)

    def test_clipping_scales_gradient(self):
        a, b = scalar(0.0, grad=100.0), scalar(0.0, grad=1.0)
        cfg = TrainConfig(learning_rate=0.01, grad_clip_norm=1.0)
        assert adamw_step(a, AdamWState(), cfg) == pytest.approx(100.0)
        adamw_step(b, AdamWState(), cfg)
        # Adam is scale-invariant on step one, so both move identically
        assert a["p"].data[0] == b["p"].data[0]

    def test_non_finite(self):
        with pytest.raises(NonFiniteGradient):
            adamw_step(scalar(1.0, grad=math.inf), AdamWState(), TrainConfig())

    @pytest.mark.parametrize("kw", [{"learning_rate": 0.0}, {"batch_size": 0}, {"epochs": 0}])
    def test_config_invariants(self, kw):
        with pytest.raises(ValidationError):
            TrainConfig(**kw)

    def test_config_round_trip(self):
        cfg = TrainConfig(weight_decay=0.01, betas=(0.8, 0.9))
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestPrediction:
    def test_one_hot_gold_is_identity(self, symptoms):
        s, labels = symptoms
        g = encode_grid(s, labels)
        probs = np.eye(labels.relation_count)[g.cells]
        assert grid_from_probs(probs) == g
        assert decode_grid(grid_from_probs(probs), labels) == sorted(
            s.entities, key=lambda e: (e.tail, e.head, e.indices))

    def test_all_none(self):
        y = np.zeros((4, 4, 3))
        y[..., 0] = 1.0
        assert decode_grid(grid_from_probs(y), LabelSet(("X",))) == []

    def test_triangle_restriction(self):
        y = np.zeros((2, 2, 4))
        y[0, 1] = [0.1, 0.2, 0.7, 0.0]  # THW is illegal above the diagonal
        y[1, 0] = [0.1, 0.8, 0.05, 0.05]  # NNW is illegal below it
        y[0, 0] = [0.25, 0.25, 0.25, 0.25]  # tie goes to NONE
        g = grid_from_probs(y)
        assert g.cells[0, 1] == 1 and g.cells[1, 0] == 0 and g.cells[0, 0] == 0

    def test_predict_runs(self, toy_config):
        out = predict_entities([1, 2, 3], init_params(toy_config, make_rng(0)), toy_config, LabelSet(("A", "B")))
        assert isinstance(out, list)


@pytest.fixture
def tiny_corpus():
    sents = gen_synthetic(SynthSpec(n_sentences=6, max_len=8, seed=3))
    labels = LabelSet.from_types(sorted({e.etype for s in sents for e in s.entities}))
    return sents, labels, build_vocab(sents)


def small_model(vocab, labels, **kw):
    return ModelConfig(vocab_size=len(vocab), relation_count=labels.relation_count, d_word=8, d_h=8,
                       d_c=6, d_biaffine=6, d_mlp=8, d_Ed=3, d_Et=2, **kw)


class TestBatching:
    def test_mask_and_padding(self, tiny_corpus):
        sents, labels, vocab = tiny_corpus
        b = make_batch(sents[:3], vocab, labels)
        for k, s in enumerate(sents[:3]):
            n = len(s)
            assert b.mask[k, :n, :n].all() and b.mask[k].sum() == n * n
            assert (b.token_ids[k, n:] == 0).all()
        assert b.token_ids.shape[1] == max(len(s) for s in sents[:3])

    def test_padding_invariance(self, tiny_corpus):
        sents, labels, vocab = tiny_corpus
        cfg = small_model(vocab, labels)
        params = init_params(cfg, make_rng(1))
        short = min(sents, key=len)
        long_ = Sentence(tuple(["w1"] * (len(short) + 7)), ())
        alone = batch_losses(make_batch([short], vocab, labels), params, cfg)[0]
        padded = make_batch([short, long_], vocab, labels)
        assert batch_losses(padded, params, cfg)[0] == alone
        ids = vocab.encode(short.tokens)
        assert predict_entities(padded.ids(0), params, cfg, labels) == predict_entities(ids, params, cfg, labels)


class TestTrainEpochs:
    def test_one_sentence_loss_decreases(self, symptoms):
        s, labels = symptoms
        vocab = build_vocab([s])
        cfg = small_model(vocab, labels, dropout_p=0.0)
        res = train_epochs([s], labels, vocab, cfg, TrainConfig(epochs=15, learning_rate=1e-2))
        assert res.log[-1].loss < res.log[0].loss
        assert math.isnan(res.log[0].dev_f1)

    def test_deterministic(self, tiny_corpus):
        sents, labels, vocab = tiny_corpus
        cfg = small_model(vocab, labels, dropout_p=0.3)
        tc = TrainConfig(epochs=3, batch_size=4, seed=5)
        a = train_epochs(sents, labels, vocab, cfg, tc, dev=sents)
        b = train_epochs(sents, labels, vocab, cfg, tc, dev=sents)
        assert [r.line() for r in a.log] == [r.line() for r in b.log]
        for k in a.params:
            assert a.params[k].data.tobytes() == b.params[k].data.tobytes()

    def test_seed_changes_curve(self, tiny_corpus):
        sents, labels, vocab = tiny_corpus
        cfg = small_model(vocab, labels)
        a = train_epochs(sents, labels, vocab, cfg, TrainConfig(epochs=2, seed=0))
        b = train_epochs(sents, labels, vocab, cfg, TrainConfig(epochs=2, seed=1))
        assert a.log[-1].loss != b.log[-1].loss

    def test_best_dev_params_returned(self, tiny_corpus):
        sents, labels, vocab = tiny_corpus
        cfg = small_model(vocab, labels, dropout_p=0.0)
        res = train_epochs(sents, labels, vocab, cfg, TrainConfig(epochs=4, learning_rate=5e-3), dev=sents)
        best = max(res.log, key=lambda r: r.dev_f1)
        assert res.best_epoch == best.epoch

    def test_callback_and_log_line(self, symptoms):
        s, labels = symptoms
        vocab = build_vocab([s])
        seen = []
        train_epochs([s], labels, vocab, small_model(vocab, labels), TrainConfig(epochs=2), on_epoch=seen.append)
        assert [r.epoch for r in seen] == [1, 2]
        assert EpochRecord(3, 0.5, 1.0).line() == "3\t0.5\t1.0"

    def test_empty_dataset(self, symptoms):
        _, labels = symptoms
        vocab = build_vocab([])
        with pytest.raises(ValidationError):
            train_epochs([], labels, vocab, small_model(vocab, labels), TrainConfig())
