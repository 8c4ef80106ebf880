import io
import math

import numpy as np
import pytest
from oracles import adamw_reference, gradcheck_draw

from relint.neural import (
    ONE_MINUS_P,
    VERBATIM,
    AdamW,
    AdamWState,
    ContractError,
    ModelParams,
    NonFiniteError,
    TrainConfig,
    average_embed,
    backward,
    checkpoint_bytes,
    fit,
    forward,
    load_checkpoint,
    loss_and_grads,
    optimizer_step,
    pair_loss,
    predict,
    sigmoid,
)


def zero_params(n_source=4, n_out=3, arity=3, dim=4):
    p = ModelParams.init(n_source, n_out, arity, dim=dim, hidden=(5,))
    return ModelParams(
        np.zeros_like(p.embed), [np.zeros_like(w) for w in p.weights], [np.zeros_like(b) for b in p.biases], arity, n_source
    )


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.gamma, c.max_neighbors, c.threshold, c.folds, c.retrieval_k, c.dim) == (10.0, 30, 0.5, 5, 5, 32)
        assert (c.lr, c.eps) == (0.01, 1e-8)
        assert c.loss_variant == VERBATIM

    @pytest.mark.parametrize(
        "bad", [dict(gamma=0), dict(folds=1), dict(threshold=1.0), dict(threshold=0.0), dict(loss_variant="hinge")]
    )
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    def test_dict_roundtrip(self):
        c = TrainConfig(hidden=(64, 32), seed=9, loss_variant=ONE_MINUS_P)
        assert TrainConfig.from_dict(c.to_dict()) == c


class TestAverageEmbed:
    def test_singleton(self):
        t = np.arange(12.0).reshape(4, 3)
        assert np.array_equal(average_embed({2}, t), t[2])

    def test_empty_is_zero(self):
        assert np.array_equal(average_embed(set(), np.ones((3, 5))), np.zeros(5))

    def test_two_rows(self):
        t = np.eye(4)
        assert np.allclose(average_embed([0, 1], t), [0.5, 0.5, 0, 0])

    def test_invalid_id(self):
        with pytest.raises(IndexError):
            average_embed([5], np.ones((3, 2)))


class TestForward:
    def test_zero_params_give_half(self):
        p = zero_params()
        assert np.array_equal(forward(p, np.ones(12)), np.full(3, 0.5))

    def test_golden_vector(self):
        p = ModelParams.init(5, 4, 3, dim=4, hidden=(6,), seed=11)
        out = forward(p, np.linspace(-1, 1, 12))
        golden = [0.5441982884487854, 0.38637525162322933, 0.4762336677269606, 0.41430416478612986]
        assert np.allclose(out, golden, rtol=0, atol=1e-12)

    def test_width_mismatch(self):
        with pytest.raises(ContractError):
            forward(zero_params(), np.ones(7))

    def test_param_shape_contract(self):
        p = ModelParams.init(4, 3, 3, dim=4, hidden=(5,))
        with pytest.raises(ContractError):
            ModelParams(p.embed, p.weights, p.biases, 6, 4)

    def test_sigmoid_extremes_stay_finite(self):
        out = sigmoid(np.array([-800.0, 0.0, 800.0]))
        assert np.all(np.isfinite(out)) and out[1] == 0.5

    def test_predict_batch_matches_single(self):
        p = ModelParams.init(6, 3, 3, dim=4, hidden=(5,), seed=2)
        batch = [[[0, 1], [], [5]], [[2], [3, 4], []]]
        for slots, row in zip(batch, predict(p, batch)):
            feats = np.concatenate([average_embed(s, p.embed) for s in slots])
            assert np.allclose(forward(p, feats), row, atol=1e-14)


class TestLoss:
    def test_verbatim_hand_value(self):
        probs = np.full(250, 0.5)
        loss = pair_loss(probs, {0}, gamma=10, variant=VERBATIM)
        assert loss == pytest.approx(math.log(2) - 10 * math.log(2), abs=1e-12)
        assert round(loss, 3) == -6.238

    def test_one_minus_p_perfect_limit(self):
        eps = 1e-6
        probs = np.array([1 - eps, eps, eps, 1 - eps])
        assert pair_loss(probs, {0, 3}, variant=ONE_MINUS_P) == pytest.approx(0.0, abs=1e-4)

    @pytest.mark.parametrize("seed", range(5))
    def test_verbatim_recomputation(self, seed):
        rng = np.random.default_rng(seed)
        probs = rng.uniform(0.01, 0.99, 9)
        gold = {1, 4}
        neg = [i for i in range(9) if i not in gold]
        expected = -np.mean([math.log(probs[i]) for i in gold]) + 10 * np.mean([math.log(probs[i]) for i in neg])
        assert pair_loss(probs, gold) == pytest.approx(expected, abs=1e-10)

    def test_clamping(self):
        assert np.isfinite(pair_loss(np.array([0.0, 1.0]), {0}))
        assert pair_loss(np.array([0.0, 0.5]), {0}) == pytest.approx(-math.log(1e-7) + 10 * math.log(0.5))

    def test_empty_gold(self):
        with pytest.raises(ContractError):
            pair_loss(np.full(3, 0.5), set())

    def test_verbatim_monotonicity(self):
        base = np.array([0.4, 0.3, 0.6])
        up_pos = base.copy()
        up_pos[0] = 0.5
        up_neg = base.copy()
        up_neg[1] = 0.4
        assert pair_loss(up_pos, {0}) < pair_loss(base, {0})
        assert pair_loss(up_neg, {0}) > pair_loss(base, {0})


class TestBackward:
    @pytest.mark.parametrize("arity", [3, 6])
    @pytest.mark.parametrize("variant", [VERBATIM, ONE_MINUS_P])
    def test_finite_differences(self, arity, variant):
        assert max(gradcheck_draw(seed, arity, variant) for seed in range(10)) < 1e-4

    def test_untouched_rows_zero(self):
        p = ModelParams.init(6, 3, 3, dim=4, hidden=(5,), seed=1)
        g = backward(p, [[[0], [1], []]], [frozenset({2})])
        assert np.all(g.embed[2:] == 0) and np.any(g.embed[0] != 0)

    def test_duplicate_example_doubles(self):
        p = ModelParams.init(6, 3, 3, dim=4, hidden=(5,), seed=1)
        ex, gold = [[0, 3], [1], [5]], frozenset({0})
        g1 = backward(p, [ex], [gold])
        g2 = backward(p, [ex, ex], [gold, gold])
        for a, b in zip(g1.arrays().values(), g2.arrays().values()):
            assert np.allclose(2 * a, b, atol=1e-14)

    def test_mean_reduction_and_weights(self):
        p = ModelParams.init(6, 3, 3, dim=4, hidden=(5,), seed=1)
        batch = [[[0], [1], [2]], [[3], [], [4]]]
        golds = [frozenset({0}), frozenset({1})]
        total, _ = loss_and_grads(p, batch, golds)
        mean, _ = loss_and_grads(p, batch, golds, reduction="mean")
        weighted, _ = loss_and_grads(p, batch, golds, weights=np.array([1.0, 0.0]))
        first, _ = loss_and_grads(p, batch[:1], golds[:1])
        assert mean == pytest.approx(total / 2)
        assert weighted == pytest.approx(first)


class TestAdamW:
    def scalar(self, w):
        p = ModelParams(np.array([[w]]), [np.zeros((3, 1))], [np.zeros(1)], 3, 1)
        return p

    def test_single_step_by_hand(self):
        p, g = self.scalar(1.0), self.scalar(1.0)
        state = AdamWState.zeros(p)
        optimizer_step(p, g, state, TrainConfig())
        expected = 1.0 * (1 - 0.01 * 0.01) - 0.01 * 1.0 / (1.0 + 1e-8)
        assert p.embed[0, 0] == pytest.approx(expected, abs=1e-15)
        assert state.step == 1

    def test_matches_reference_over_steps(self):
        p, g = self.scalar(0.3), self.scalar(-0.7)
        state = AdamWState.zeros(p)
        opt = AdamW()
        for _ in range(5):
            opt.step(p, g, state)
        assert p.embed[0, 0] == pytest.approx(adamw_reference(0.3, -0.7, 5), abs=1e-15)

    def test_zero_grad_zero_decay(self):
        p = ModelParams.init(3, 2, 3, dim=2, hidden=(4,), seed=0)
        before = p.copy()
        state = AdamWState.zeros(p)
        AdamW(weight_decay=0.0).step(p, p.zeros_like(), state)
        for a, b in zip(p.arrays().values(), before.arrays().values()):
            assert np.array_equal(a, b)
        state.m["embed"][:] = 1.0
        state.v["embed"][:] = 1.0
        AdamW(weight_decay=0.0).step(p, p.zeros_like(), state)
        assert np.allclose(state.m["embed"], 0.9) and np.allclose(state.v["embed"], 0.999)

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            p = ModelParams.init(3, 2, 3, dim=2, hidden=(4,), seed=0)
            g = ModelParams.init(3, 2, 3, dim=2, hidden=(4,), seed=1)
            state = AdamWState.zeros(p)
            AdamW().step(p, g, state)
            AdamW().step(p, g, state)
            runs.append(checkpoint_bytes(p, {}))
        assert runs[0] == runs[1]

    def test_non_finite_rejected(self):
        p = ModelParams.init(3, 2, 3, dim=2, hidden=(4,), seed=0)
        g = p.zeros_like()
        g.weights[0][0, 0] = np.nan
        before = p.copy()
        state = AdamWState.zeros(p)
        with pytest.raises(NonFiniteError):
            AdamW().step(p, g, state)
        assert state.step == 0 and np.array_equal(p.weights[0], before.weights[0])


class TestCheckpoint:
    def test_roundtrip_bit_exact(self):
        p = ModelParams.init(5, 4, 6, dim=3, hidden=(7, 2), n_target=4, seed=5)
        p.meta = {"kind": "collective"}
        blob = checkpoint_bytes(p, {"config": TrainConfig().to_dict()})
        q, head = load_checkpoint(io.BytesIO(blob))
        for a, b in zip(p.arrays().values(), q.arrays().values()):
            assert a.tobytes() == b.tobytes()
        assert (q.arity, q.n_source, q.n_target, q.meta) == (6, 5, 4, {"kind": "collective"})
        assert head["config"]["gamma"] == 10.0
        assert checkpoint_bytes(q, {"config": TrainConfig().to_dict()}) == blob

    def test_bad_magic(self):
        with pytest.raises(ContractError):
            load_checkpoint(io.BytesIO(b"NOTACKPT" + b"\0" * 20))


class TestFit:
    def problem(self):
        rng = np.random.default_rng(0)
        slots = [[[int(rng.integers(6))], [], []] for _ in range(40)]
        golds = [frozenset({s[0][0] % 3}) for s in slots]
        return slots, golds

    def test_loss_decreases_and_is_deterministic(self):
        slots, golds = self.problem()
        cfg = TrainConfig(dim=4, hidden=(8,), epochs=15, batch_size=8, loss_variant=ONE_MINUS_P)
        blobs = []
        for _ in range(2):
            p = ModelParams.init(6, 3, 3, dim=4, hidden=(8,), seed=0)
            hist = fit(p, lambda rng: slots, golds, cfg)
            blobs.append(checkpoint_bytes(p, {}))
        assert hist[-1] < hist[0]
        assert blobs[0] == blobs[1]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reported(self):
        slots, golds = self.problem()
        cfg = TrainConfig(dim=4, hidden=(8,), epochs=2, lr=1e308)
        p = ModelParams.init(6, 3, 3, dim=4, hidden=(8,), seed=0)
        with pytest.raises(NonFiniteError):
            fit(p, lambda rng: slots, golds, cfg)

    def test_empty(self):
        with pytest.raises(ContractError):
            fit(zero_params(), lambda rng: [], [], TrainConfig())
