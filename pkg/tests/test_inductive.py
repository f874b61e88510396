import hashlib
import math

import numpy as np
import pytest

from textnet import inductive
from textnet import numerics as nm
from textnet.config import TrainConfig
from textnet.corpus import TextTensor
from textnet.numerics import RngFactory, RngStream

from conftest import random_text_instance


def _hash(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def mapper_oracle(ids, words, mp):
    """Straight-line scalar evaluation of the convolutional mapper."""
    L = len(ids)
    d_out, window, d_in = mp.conv.shape
    xs = []
    for j in range(L - window + 1):
        x = [mp.bias[o] for o in range(d_out)]
        for o in range(window):
            wv = words[ids[j + o]]
            for out_k in range(d_out):
                x[out_k] += sum(mp.conv[out_k, o, i] * wv[i]
                                for i in range(d_in))
        xs.append(x)
    pooled = [max(x[k] for x in xs) for k in range(d_out)]
    h0 = [max(v, 0.0) for v in pooled]
    h1 = [sum(mp.proj1[r, c] * h0[c] for c in range(d_out))
          for r in range(d_out)]
    h1r = [max(v, 0.0) for v in h1]
    out = [sum(mp.proj2[r, c] * h1r[c] for c in range(d_out))
           for r in range(d_out)]
    return np.array(out)


def _tiny_mapper(seed=0, d=2, window=2):
    rng = np.random.default_rng(seed)
    mp = inductive.MapperParams.init(d, window, RngStream(seed, "mp"))
    mp.conv = rng.normal(size=(d, window, d)) * 0.6
    mp.bias = rng.normal(size=d) * 0.3
    mp.proj1 = rng.normal(size=(d, d)) * 0.6
    mp.proj2 = rng.normal(size=(d, d)) * 0.6
    return mp


class TestMapperForward:
    def test_all_zero_params_zero_output(self):
        mp = _tiny_mapper()
        mp.conv[:] = 0.0
        mp.bias[:] = 0.0
        mp.proj1[:] = 0.0
        mp.proj2[:] = 0.0
        words = np.random.default_rng(1).normal(size=(5, 2))
        out = inductive.mapper_forward(np.array([1, 2, 3]), words, mp)
        assert np.array_equal(out, np.zeros(2))

    def test_all_pad_text_follows_bias_path(self):
        mp = _tiny_mapper(seed=3)
        words = np.random.default_rng(2).normal(size=(5, 2))
        words[0] = 0.0
        out = inductive.mapper_forward(np.array([0, 0, 0]), words, mp)
        # every window sees zero vectors, so each x^j equals the bias
        h0 = np.maximum(mp.bias, 0.0)
        h1r = np.maximum(mp.proj1 @ h0, 0.0)
        expected = mp.proj2 @ h1r
        assert np.allclose(out, expected, atol=1e-14)
        assert np.allclose(out, mapper_oracle([0, 0, 0], words, mp), atol=1e-14)

    def test_matches_scalar_oracle(self):
        for seed in range(10):
            mp = _tiny_mapper(seed=seed)
            rng = np.random.default_rng(seed + 50)
            words = rng.normal(size=(7, 2))
            words[0] = 0.0
            ids = rng.integers(0, 7, size=3)
            out = inductive.mapper_forward(ids, words, mp)
            assert np.allclose(out, mapper_oracle(list(ids), words, mp),
                               atol=1e-13)

    def test_short_text_padded_to_window(self):
        mp = _tiny_mapper(seed=4)
        words = np.random.default_rng(3).normal(size=(5, 2))
        out = inductive.mapper_forward(np.array([2]), words, mp)
        assert out.shape == (2,)
        assert np.all(np.isfinite(out))


class TestMapperGradients:
    def test_finite_differences_20_seeds(self):
        for seed in range(20):
            rng = np.random.default_rng(600 + seed)
            d = 2
            mp = _tiny_mapper(seed=seed)
            words = rng.normal(size=(8, d))
            words[0] = 0.0
            ids = rng.integers(1, 8, size=(3, 4)).astype(np.int32)
            text = TextTensor(ids, np.ones((3, 4)), np.full(3, 4))
            targets = rng.normal(size=(3, d))

            loss, grads = inductive.mapper_loss_and_grads(
                np.arange(3), targets, words, text, mp)

            def loss_fn(params):
                mp2 = inductive.MapperParams(params["conv"], params["bias"],
                                             params["proj1"], params["proj2"])
                l, _ = inductive.mapper_loss_and_grads(np.arange(3), targets,
                                                       words, text, mp2)
                return l

            report = nm.finite_diff_check(
                loss_fn,
                {"conv": mp.conv, "bias": mp.bias,
                 "proj1": mp.proj1, "proj2": mp.proj2},
                grads)
            assert report.passed, f"seed {seed}: {report.max_rel_err}"


class TestFitMapper:
    def _setup(self, seed=0):
        rng = np.random.default_rng(seed)
        text, words, struct = random_text_instance(rng, n_pairs=4)
        cfg = TrainConfig(dim=struct.shape[1], mapper_window=2,
                          mapper_batch=4, mapper_epochs=30, lr=0.01)
        return text, words, struct, cfg

    def test_loss_decreases(self):
        text, words, struct, cfg = self._setup()
        mp, history = inductive.fit_mapper(np.arange(len(struct)), struct,
                                           words, text, cfg, RngFactory(1))
        assert history[-1] < history[0]

    def test_zero_targets_shrink_outputs(self):
        text, words, struct, cfg = self._setup()
        struct = np.zeros_like(struct)
        mp, history = inductive.fit_mapper(np.arange(len(struct)), struct,
                                           words, text, cfg, RngFactory(1))
        assert history[-1] < history[0]

    def test_deterministic(self):
        text, words, struct, cfg = self._setup()
        mps = [inductive.fit_mapper(np.arange(len(struct)), struct, words,
                                    text, cfg, RngFactory(5))[0]
               for _ in range(2)]
        assert np.array_equal(mps[0].conv, mps[1].conv)
        assert np.array_equal(mps[0].proj2, mps[1].proj2)

    def test_words_frozen(self):
        text, words, struct, cfg = self._setup()
        before = words.copy()
        inductive.fit_mapper(np.arange(len(struct)), struct, words, text,
                             cfg, RngFactory(1))
        assert np.array_equal(words, before)


class TestUnseenState:
    def _setup(self, seed=0):
        rng = np.random.default_rng(seed)
        text, words, struct = random_text_instance(rng, n_pairs=4)
        n = struct.shape[0]
        cfg = TrainConfig(dim=struct.shape[1], mapper_window=2,
                          mapper_batch=4, mapper_epochs=5, lr=0.01,
                          posttrain_epochs=3, posttrain_batch=2, k_neg=1,
                          lambda_reg=0.1, lam1=1.0, lam2=1.0, lam3=1.0)
        seen = np.arange(n - 3)
        unseen = np.arange(n - 3, n)
        degrees = np.zeros(n)
        degrees[seen] = 2
        mp, _ = inductive.fit_mapper(seen, struct, words, text, cfg,
                                     RngFactory(2))
        state = inductive.init_unseen_state(unseen, struct, words, text, mp,
                                            nm.degree_power_cdf(degrees),
                                            cfg.lambda_reg)
        return text, words, struct, cfg, seen, unseen, mp, state

    def test_initialization_identity(self):
        text, words, struct, cfg, seen, unseen, mp, state = self._setup()
        outputs = inductive.mapper_forward(text.ids[unseen], words, mp)
        assert np.array_equal(state.struct[unseen], outputs)
        assert np.array_equal(state.mapper_targets, outputs)
        assert np.array_equal(state.struct[seen], struct[seen])

    def test_regularizer_gradient_closed_form(self):
        text, words, struct, cfg, seen, unseen, mp, state = self._setup()
        rng = np.random.default_rng(3)
        state.struct[unseen] += rng.normal(size=(len(unseen),
                                                 struct.shape[1])) * 0.1
        grad = inductive.regularizer_grad(state)
        expected = 2.0 * state.lambda_reg * (state.struct[unseen]
                                             - state.mapper_targets)
        assert np.array_equal(grad, expected)

    def test_posttrain_moves_only_unseen_rows(self):
        text, words, struct, cfg, seen, unseen, mp, state = self._setup()
        frozen = {"words": _hash(words), "seen": _hash(state.struct[seen]),
                  "conv": _hash(mp.conv), "proj1": _hash(mp.proj1),
                  "proj2": _hash(mp.proj2), "bias": _hash(mp.bias)}
        before_unseen = state.struct[unseen].copy()
        inductive.posttrain_unseen(state, text, cfg, RngFactory(4))
        assert _hash(words) == frozen["words"]
        assert _hash(state.struct[seen]) == frozen["seen"]
        assert _hash(mp.conv) == frozen["conv"]
        assert _hash(mp.proj1) == frozen["proj1"]
        assert _hash(mp.proj2) == frozen["proj2"]
        assert _hash(mp.bias) == frozen["bias"]
        assert not np.array_equal(state.struct[unseen], before_unseen)

    def test_posttrain_empty_unseen_is_noop(self):
        text, words, struct, cfg, seen, unseen, mp, state = self._setup()
        state.unseen = np.zeros(0, dtype=np.int64)
        out = inductive.posttrain_unseen(state, text, cfg, RngFactory(4))
        assert len(out) == 0

    def test_strong_regularizer_pins_to_mapper_outputs(self):
        text, words, struct, cfg, seen, unseen, mp, state = self._setup()
        rng = np.random.default_rng(5)
        offset = rng.normal(size=(len(unseen), struct.shape[1]))
        state.struct[unseen] = state.mapper_targets + offset
        state.lambda_reg = 1e6
        dist_before = np.linalg.norm(state.struct[unseen]
                                     - state.mapper_targets)
        import dataclasses
        cfg2 = dataclasses.replace(cfg, posttrain_epochs=20, lr=0.05)
        inductive.posttrain_unseen(state, text, cfg2, RngFactory(6))
        dist_after = np.linalg.norm(state.struct[unseen]
                                    - state.mapper_targets)
        assert dist_after < dist_before

    def test_deterministic(self):
        results = []
        for _ in range(2):
            text, words, struct, cfg, seen, unseen, mp, state = self._setup()
            inductive.posttrain_unseen(state, text, cfg, RngFactory(7))
            results.append(state.struct[unseen].copy())
        assert np.array_equal(results[0], results[1])
