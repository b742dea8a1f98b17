#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Tests for the reverse-mode tensor engine, Adam and checkpoint persistence."""

import numpy as np
import pytest

# pylint: disable=import-error
from topoformer import autodiff as ad
from topoformer.autodiff import Adam, AdamState, ParameterStore, Tensor, adam_step, gradcheck
from topoformer.exceptions import ChecksumError, ContainerError, SchemaError, TruncatedFileError

RNG = np.random.default_rng(0)
TOLERANCE = 1e-6


def weighted(out: Tensor, seed: int = 1) -> Tensor:
    """Scalar loss sum(out * w) with fixed random weights, so every output element matters."""
    weights = np.random.default_rng(seed).normal(size=out.shape)
    return ad.sum(ad.mul(out, weights))


def tensor(*shape: int, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(RNG.uniform(low, high, size=shape))


# two (3, 4) inputs in, any shape out; all smooth everywhere
SMOOTH_OPS = {
    "add": ad.add,
    "mul": ad.mul,
    "div": lambda x, y: ad.div(x, ad.add(ad.square(y), 0.5)),
    "matmul": lambda x, y: ad.matmul(x, ad.transpose(y)),
    "softmax": lambda x, y: ad.mul(ad.softmax(x, axis=-1), y),
    "layer_norm": lambda x, y: ad.layer_norm(x, y[0], y[1]),
    "gelu": lambda x, y: ad.gelu(ad.mul(x, y)),
    "sigmoid": lambda x, y: ad.sigmoid(ad.sub(x, y)),
    "exp": lambda x, y: ad.mul(ad.exp(x), y),
    "log": lambda x, y: ad.log(ad.add(ad.square(x), ad.add(ad.square(y), 0.5))),
    "mean": lambda x, y: ad.mean(ad.mul(x, y), axis=0),
}


class TestGradients:
    """Analytic gradients agree with central differences."""

    @pytest.mark.parametrize(
        "op",
        [ad.add, ad.sub, ad.mul, ad.div, ad.maximum],
        ids=["add", "sub", "mul", "div", "maximum"],
    )
    def test_broadcasting_binary_ops(self, op):
        """Binary ops differentiate through broadcasting on both sides."""
        a = tensor(3, 4)
        b = tensor(1, 4, low=0.5, high=1.5)
        assert gradcheck(lambda x, y: weighted(op(x, y)), [a, b]) < TOLERANCE

    @pytest.mark.parametrize(
        "op,low",
        [
            (ad.neg, -1.0),
            (ad.square, -1.0),
            (ad.exp, -1.0),
            (ad.log, 0.5),
            (ad.gelu, -2.0),
            (ad.sigmoid, -2.0),
            (lambda x: ad.softmax(x, axis=-1), -1.0),
            (lambda x: ad.mean(x, axis=0), -1.0),
            (lambda x: ad.sum(x, axis=1, keepdims=True), -1.0),
            (lambda x: ad.reshape(x, (4, 3)), -1.0),
            (lambda x: ad.transpose(x), -1.0),
            (lambda x: x[1:, ::2], -1.0),
            (lambda x: ad.gather_rows(x, [2, 0, 2]), -1.0),
            (ad.cross_max, -1.0),
        ],
        ids=[
            "neg",
            "square",
            "exp",
            "log",
            "gelu",
            "sigmoid",
            "softmax",
            "mean",
            "sum",
            "reshape",
            "transpose",
            "slice",
            "gather",
            "cross_max",
        ],
    )
    def test_unary_ops(self, op, low):
        """Unary ops, reductions and indexing."""
        x = tensor(3, 4, low=low, high=low + 2.0)
        assert gradcheck(lambda a: weighted(op(a)), [x]) < TOLERANCE

    def test_abs_and_clip_away_from_kinks(self):
        """abs and clip are differentiable away from their kinks."""
        x = Tensor(np.array([[-0.8, -0.3, 0.4, 0.9]]))
        assert gradcheck(lambda a: weighted(ad.abs(a)), [x]) < TOLERANCE
        assert gradcheck(lambda a: weighted(ad.clip(a, -0.5, 0.5)), [x]) < TOLERANCE

    def test_batched_matmul(self):
        """Batched matmul broadcasts a shared right operand."""
        a = tensor(2, 3, 4)
        b = tensor(4, 5)
        assert gradcheck(lambda x, y: weighted(ad.matmul(x, y)), [a, b]) < TOLERANCE

    def test_layer_norm(self):
        """layer_norm differentiates through the statistics and the affine part."""
        x, w, b = tensor(3, 5), tensor(5), tensor(5)
        assert gradcheck(lambda p, q, r: weighted(ad.layer_norm(p, q, r)), [x, w, b]) < 1e-5

    def test_concat(self):
        """concat splits the gradient back to its parts."""
        a, b = tensor(2, 3), tensor(2, 2)
        assert gradcheck(lambda x, y: weighted(ad.concat([x, y], axis=1)), [a, b]) < TOLERANCE

    def test_cross_max_values(self):
        """Each cell sees itself and its edge neighbours, never its diagonals."""
        image = np.zeros((3, 3))
        image[0, 0] = 5.0
        out = ad.cross_max(Tensor(image)).data
        assert out[0, 0] == out[0, 1] == out[1, 0] == 5.0
        assert out[1, 1] == 0.0
        with pytest.raises(ValueError, match="cross_max"):
            ad.cross_max(Tensor(np.ones(3)))

    def test_mse_loss(self):
        """mse_loss matches its closed form."""
        pred = Tensor(np.array([1.0, 2.0, 4.0]))
        assert ad.mse_loss(pred, np.array([1.0, 0.0, 2.0])).item() == pytest.approx(8.0 / 3.0)

    @pytest.mark.parametrize("name", sorted(SMOOTH_OPS))
    def test_hundred_random_instances(self, name):
        """Each smooth op passes gradcheck on 100 random input draws."""
        op = SMOOTH_OPS[name]
        rng = np.random.default_rng(sum(map(ord, name)))
        for trial in range(100):
            x = Tensor(rng.uniform(-1.0, 1.0, size=(3, 4)))
            y = Tensor(rng.uniform(-1.0, 1.0, size=(3, 4)))
            error = gradcheck(lambda a, b, s=trial: weighted(op(a, b), seed=s), [x, y])
            assert error < 1e-5, f"{name} failed on draw {trial}"


class TestGraph:
    """Graph recording and accumulation rules."""

    def test_leaf_gradients_accumulate(self):
        """Two backward passes add into a leaf's grad."""
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        ad.backward(ad.sum(ad.square(x)))
        ad.backward(ad.sum(ad.square(x)))
        assert np.allclose(x.grad, [4.0, 8.0])

    def test_reused_tensor_sums_both_paths(self):
        """A tensor used twice receives both contributions."""
        x = Tensor(np.array(3.0), requires_grad=True)
        ad.backward(x * x + x)
        assert x.grad == pytest.approx(7.0)

    def test_no_grad_records_nothing(self):
        """Under no_grad results do not require grad."""
        x = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            y = ad.sum(ad.square(x))
        assert not y.requires_grad
        assert y.is_leaf

    def test_non_scalar_loss_raises(self):
        """backward needs a scalar."""
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(ad.square(x))

    def test_shape_errors_name_the_op(self):
        """Broadcast and alignment failures name the operation and shapes."""
        with pytest.raises(ValueError, match=r"add: shapes \(2, 3\) and \(4,\)"):
            ad.add(np.zeros((2, 3)), np.zeros(4))
        with pytest.raises(ValueError, match="matmul"):
            ad.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError, match="log"):
            ad.log(np.zeros(2))

    def test_debug_mode_rejects_nan(self):
        """Debug mode stops at the first NaN input."""
        ad.set_debug(True)
        try:
            with pytest.raises(ValueError, match="NaN input to 'exp'"):
                ad.exp(np.array([np.nan]))
        finally:
            ad.set_debug(False)

    def test_operator_overloads(self):
        """Python operators route through the graph, including reflected ones."""
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = 1.0 - x / 4.0 + np.array([3.0]) * x
        ad.backward(ad.sum(y))
        assert y.data[0] == pytest.approx(6.5)
        assert x.grad[0] == pytest.approx(2.75)


class TestAdam:
    """Bias-corrected Adam."""

    def test_first_step_moves_by_learning_rate(self):
        """The first update is lr * sign(g) for gradients far above eps."""
        params = {"w": np.array([1.0, -1.0, 0.5])}
        adam_step(params, {"w": np.array([0.3, -2.0, 5.0])}, AdamState(), lr=0.1)
        assert np.allclose(params["w"], [0.9, -0.9, 0.4], atol=1e-6)

    def test_minimizes_quadratic(self):
        """Adam drives a quadratic bowl to its minimum."""
        store = ParameterStore()
        w = store.add("w", np.array([3.0, -2.0]))
        optimizer = Adam(store)
        target = np.array([0.5, 1.5])
        for _ in range(500):
            store.zero_grad()
            ad.backward(ad.sum(ad.square(ad.sub(w, target))))
            optimizer.step(0.05)
        assert np.allclose(store["w"].data, target, atol=1e-2)

    def test_shape_mismatch_raises(self):
        """Gradient and parameter shapes must agree."""
        with pytest.raises(ValueError, match="adam"):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), lr=0.1)

    def test_unknown_names_raise(self):
        """Adam only tracks parameters present in the store."""
        with pytest.raises(KeyError, match="Unknown"):
            Adam(ParameterStore(), ["missing"])


class TestParameterStore:
    """Named parameters and TOPOCK01 checkpoints."""

    @pytest.fixture
    def checkpoint(self, tmp_path):
        store = ParameterStore()
        store.add("embed.w", RNG.normal(size=(3, 4)))
        store.add("embed.b", np.zeros(4))
        path = store.save(tmp_path / "model.topock", metadata={"step": 12})
        return store, path

    def test_round_trip(self, checkpoint):
        """Names, order, values and metadata survive."""
        store, path = checkpoint
        loaded, metadata = ParameterStore.load(path)
        assert loaded.names() == store.names()
        for name in store.names():
            assert np.array_equal(loaded[name].data, store[name].data)
        assert metadata == {"step": 12}
        assert loaded.parameter_count() == 16

    def test_duplicate_and_unknown_names(self):
        """add refuses duplicates; replace needs an existing name."""
        store = ParameterStore()
        store.add("w", np.zeros(2))
        with pytest.raises(KeyError, match="already exists"):
            store.add("w", np.zeros(2))
        with pytest.raises(KeyError, match="Unknown parameter"):
            store.replace("v", np.zeros(2))
        assert store.replace("w", np.zeros(5)).shape == (5,)

    def test_load_state_dict_checks_schema(self):
        """Names and shapes must match exactly."""
        store = ParameterStore()
        store.add("w", np.zeros(2))
        with pytest.raises(SchemaError, match="missing"):
            store.load_state_dict({"v": np.zeros(2)})
        with pytest.raises(SchemaError, match="Shape mismatch"):
            store.load_state_dict({"w": np.zeros(3)})
        store.load_state_dict({"w": np.ones(2)})
        assert np.array_equal(store["w"].data, np.ones(2))

    def test_corruption(self, checkpoint):
        """Damaged checkpoints raise specific container errors."""
        _, path = checkpoint
        data = path.read_bytes()

        path.write_bytes(b"NOTACKPT" + data[8:])
        with pytest.raises(ContainerError, match="TOPOCK01"):
            ParameterStore.load(path)

        damaged = bytearray(data)
        damaged[-8] ^= 0x10
        path.write_bytes(bytes(damaged))
        with pytest.raises(ChecksumError, match="embed.b"):
            ParameterStore.load(path)

        path.write_bytes(data[:-6])
        with pytest.raises(TruncatedFileError):
            ParameterStore.load(path)

        path.write_bytes(data + b"\x01")
        with pytest.raises(ContainerError, match="trailing"):
            ParameterStore.load(path)
