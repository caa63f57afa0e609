import math

import numpy as np
import pytest

from convarrange.checkpoints import SnapshotStore
from convarrange.datasets import synth_shapes, split_train_val
from convarrange.errors import LabelOutOfRange, NonFiniteLoss
from convarrange.layers import Conv2D, Dense, Model
from convarrange.train import (
    ExponentialSchedule,
    InitSpec,
    OptimizerState,
    PerEpochFactorSchedule,
    StepSchedule,
    evaluate,
    grad_check,
    initialize,
    loss_softmax_xent,
    lr_at,
    schedule_from_dict,
    schedule_to_dict,
    sgd_step,
    train_run,
)

TINY_SPEC = {
    "input_shape": [1, 16, 16],
    "layers": [
        {"kind": "conv", "filters": 4, "kernel": 3, "padding": 1},
        {"kind": "relu"},
        {"kind": "maxpool"},
        {"kind": "flatten"},
        {"kind": "dense", "out": 2},
    ],
}


class TestSchedules:
    def test_step_closed_form(self):
        s = StepSchedule(base=0.01, factor=0.1, period=25)
        assert lr_at(s, 0) == 0.01
        assert lr_at(s, 24) == 0.01
        assert lr_at(s, 25) == 0.01 * 0.1
        assert lr_at(s, 50) == 0.01 * 0.1**2
        assert lr_at(s, 75) == 0.01 * 0.1**3

    def test_exponential_closed_form(self):
        s = ExponentialSchedule(base=0.01, decade_epochs=25)
        assert lr_at(s, 0) == 0.01
        assert lr_at(s, 25) == pytest.approx(0.001, abs=1e-18)
        assert lr_at(s, 50) == pytest.approx(0.0001, abs=1e-19)
        for e in range(100):
            assert lr_at(s, e) == 0.01 * 10.0 ** (-e / 25)

    def test_per_epoch_factor_closed_form(self):
        s = PerEpochFactorSchedule(base=0.01, factor=0.95)
        assert lr_at(s, 0) == 0.01
        assert lr_at(s, 1) == 0.01 * 0.95
        for e in range(100):
            assert lr_at(s, e) == 0.01 * 0.95**e

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            lr_at(StepSchedule(), -1)

    def test_dict_round_trip(self):
        for s in (StepSchedule(0.02, 0.5, 10), ExponentialSchedule(0.01, 25),
                  PerEpochFactorSchedule(0.1, 0.9)):
            assert schedule_from_dict(schedule_to_dict(s)) == s
        with pytest.raises(ValueError):
            schedule_from_dict({"kind": "cosine"})


class TestSgd:
    def scalar_model(self):
        spec = {"input_shape": [1, 1, 1],
                "layers": [{"kind": "flatten"}, {"kind": "dense", "out": 1}]}
        model = Model.build(spec, dtype=np.float64)
        model.layers[1].weight[...] = 0.0
        return model

    def grads(self, gw, gb=0.0):
        return [None, {"weight": np.array([[gw]]), "bias": np.array([gb])}]

    def test_momentum_recurrence_hand_values(self):
        # grad 1 at lr 0.1, momentum 0.9: steps -0.1 then -0.19
        model = self.scalar_model()
        state = OptimizerState(model, momentum=0.9, weight_decay=0.0)
        sgd_step(model, self.grads(1.0), 0.1, state)
        assert model.layers[1].weight[0, 0] == pytest.approx(-0.1, abs=1e-18)
        sgd_step(model, self.grads(1.0), 0.1, state)
        assert model.layers[1].weight[0, 0] == pytest.approx(-0.29, abs=1e-15)

    def test_weight_decay_enters_momentum_buffer(self):
        # p=1, g=0, wd=0.5: effective grad 0.5, then buffered into momentum
        model = self.scalar_model()
        model.layers[1].weight[...] = 1.0
        state = OptimizerState(model, momentum=0.9, weight_decay=0.5)
        sgd_step(model, self.grads(0.0), 0.1, state)
        assert model.layers[1].weight[0, 0] == pytest.approx(1.0 - 0.1 * 0.5)

    def test_bias_exempt_from_decay(self):
        model = self.scalar_model()
        model.layers[1].bias[...] = 2.0
        state = OptimizerState(model, momentum=0.0, weight_decay=0.5)
        sgd_step(model, self.grads(0.0, 0.0), 0.1, state)
        assert model.layers[1].bias[0] == 2.0

    def test_matches_scalar_reference_sequence(self, rng):
        # five steps against a hand-run recurrence with decay and momentum
        model = self.scalar_model()
        model.layers[1].weight[...] = 0.7
        state = OptimizerState(model, momentum=0.9, weight_decay=0.05)
        p, buf = 0.7, 0.0
        for _ in range(5):
            g = float(rng.standard_normal())
            sgd_step(model, self.grads(g), 0.02, state)
            buf = 0.9 * buf + (g + 0.05 * p)
            p = p - 0.02 * buf
            assert model.layers[1].weight[0, 0] == pytest.approx(p, rel=1e-12)


class TestInit:
    def test_kaiming_fan_out_variance(self):
        spec = {"input_shape": [32, 8, 8],
                "layers": [{"kind": "conv", "filters": 64, "kernel": 3, "padding": 1},
                           {"kind": "flatten"},
                           {"kind": "dense", "out": 4}]}
        model = Model.build(spec)
        initialize(model, InitSpec(scheme="kaiming_normal", seed=5))
        conv = model.layers[0]
        want = 2.0 / (64 * 9)  # fan_out = filters * k^2
        got = float(conv.weight.astype(np.float64).var())
        assert abs(got - want) / want <= 0.05  # 18432 draws
        assert np.all(conv.bias == 0.0)

    def test_fixed_gaussian_sigma(self):
        model = Model.build(TINY_SPEC)
        initialize(model, InitSpec(scheme="fixed_gaussian", sigma=0.01, seed=3))
        w = model.layers[0].weight.astype(np.float64)
        assert abs(float(w.std()) - 0.01) <= 0.01 * 0.5
        assert np.all(model.layers[0].bias == 0.0)

    def test_seed_determinism(self):
        a, b = Model.build(TINY_SPEC), Model.build(TINY_SPEC)
        initialize(a, InitSpec(seed=9))
        initialize(b, InitSpec(seed=9))
        for (_, pa), (_, pb) in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa, pb)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            initialize(Model.build(TINY_SPEC), InitSpec(scheme="orthogonal"))


class TestLoss:
    def test_uniform_logits_hand_value(self):
        logits = np.zeros((4, 10))
        labels = np.arange(4)
        loss, dlogits = loss_softmax_xent(logits, labels)
        assert loss == pytest.approx(math.log(10.0), rel=1e-12)
        # gradient: (softmax - onehot) / N
        want = np.full((4, 10), 0.1 / 4)
        want[np.arange(4), labels] -= 1 / 4
        np.testing.assert_allclose(dlogits, want, atol=1e-12)

    def test_shift_invariance(self, rng):
        logits = rng.standard_normal((6, 3))
        labels = rng.integers(0, 3, 6)
        a, _ = loss_softmax_xent(logits, labels)
        b, _ = loss_softmax_xent(logits + 1000.0, labels)
        assert a == pytest.approx(b, rel=1e-9)

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            loss_softmax_xent(np.zeros((2, 3)), np.array([0, 3]))
        with pytest.raises(LabelOutOfRange):
            loss_softmax_xent(np.zeros((2, 3)), np.array([-1, 0]))


class TestGradCheck:
    def test_linear_model_is_machine_precision(self, rng):
        spec = {"input_shape": [1, 2, 2],
                "layers": [{"kind": "flatten"}, {"kind": "dense", "out": 3}]}
        model = Model.build(spec, dtype=np.float64)
        model.layers[1].weight[...] = rng.standard_normal((3, 4))
        x = rng.standard_normal((5, 1, 2, 2))
        labels = rng.integers(0, 3, 5)
        assert grad_check(model, x, labels, seed=1) <= 1e-9

    def test_small_conv_model(self, rng):
        model = Model.build(TINY_SPEC, dtype=np.float64)
        for _, p in model.parameters():
            p[...] = rng.standard_normal(p.shape) * 0.4
        x = rng.standard_normal((4, 1, 16, 16))
        labels = rng.integers(0, 2, 4)
        assert grad_check(model, x, labels, seed=2) <= 1e-6


def tiny_data(seed=0, n=96):
    pool = synth_shapes(n, 2, seed)
    return split_train_val(pool, seed)


class TestTrainRun:
    def test_zero_epochs(self, tmp_path):
        train, val = tiny_data()
        model = Model.build(TINY_SPEC)
        initialize(model, InitSpec(seed=1))
        store = SnapshotStore(tmp_path / "s")
        result = train_run(model, train, val, StepSchedule(), 0, seed=1, store=store)
        assert result.metrics == []
        assert store.epochs() == [0]

    def test_metrics_and_snapshot_epochs(self, tmp_path):
        train, val = tiny_data()
        model = Model.build(TINY_SPEC)
        initialize(model, InitSpec(seed=1))
        store = SnapshotStore(tmp_path / "s")
        result = train_run(model, train, val, StepSchedule(), 3, seed=1, store=store,
                           batch_size=32)
        assert [m.epoch for m in result.metrics] == [1, 2, 3]
        assert store.epochs() == [0, 1, 2, 3]
        assert all(0.0 <= m.train_acc <= 1.0 for m in result.metrics)
        assert all(m.lr == 0.01 for m in result.metrics)

    def test_snapshot_cadence_includes_final(self, tmp_path):
        train, val = tiny_data()
        model = Model.build(TINY_SPEC)
        initialize(model, InitSpec(seed=1))
        store = SnapshotStore(tmp_path / "s")
        train_run(model, train, val, StepSchedule(), 5, seed=1, store=store,
                  batch_size=32, snapshot_every=2)
        assert store.epochs() == [0, 2, 4, 5]

    def test_determinism_bytes(self, tmp_path):
        outputs = []
        for attempt in range(2):
            train, val = tiny_data()
            model = Model.build(TINY_SPEC)
            initialize(model, InitSpec(seed=7))
            store = SnapshotStore(tmp_path / f"s{attempt}")
            result = train_run(model, train, val, StepSchedule(), 2, seed=7,
                               store=store, batch_size=32, augment=True)
            final = (store.root / "epoch_00002.npz").read_bytes()
            outputs.append((final, [(m.train_loss, m.val_loss) for m in result.metrics]))
        assert outputs[0][0] == outputs[1][0]
        assert outputs[0][1] == outputs[1][1]

    def test_different_seed_changes_training(self, tmp_path):
        finals = []
        for seed in (1, 2):
            train, val = tiny_data()
            model = Model.build(TINY_SPEC)
            initialize(model, InitSpec(seed=seed))
            store = SnapshotStore(tmp_path / f"s{seed}")
            train_run(model, train, val, StepSchedule(), 1, seed=seed, store=store,
                      batch_size=32)
            finals.append((store.root / "epoch_00001.npz").read_bytes())
        assert finals[0] != finals[1]

    def test_non_finite_loss_raises(self, tmp_path):
        train, val = tiny_data()
        model = Model.build(TINY_SPEC)
        initialize(model, InitSpec(seed=1))
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NonFiniteLoss):
            train_run(model, train, val, StepSchedule(base=1e12), 3, seed=1,
                      batch_size=32)

    def test_evaluate_is_deterministic(self):
        train, val = tiny_data()
        model = Model.build(TINY_SPEC)
        initialize(model, InitSpec(seed=4))
        assert evaluate(model, val) == evaluate(model, val)
