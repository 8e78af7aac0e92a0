import numpy as np
import pytest

from breathsense.nn import (
    Adam,
    BadMagic,
    BatchNorm2D,
    Conv2D,
    DegenerateBatch,
    Dense,
    Flatten,
    MaxPool2D,
    Network,
    ReLU,
    ShapeMismatch,
    ShapeMismatchOnLoad,
    Sigmoid,
    StaleCache,
    TruncatedPayload,
    bce_grad_logits,
    bce_loss,
    check_network,
    load_weights,
    load_weights_into,
    pack_entries,
    save_weights,
    unpack_entries,
)


class TestConv2D:
    def test_identity_kernel(self):
        layer = Conv2D(1, 1)
        layer.params["weight"] = np.zeros((1, 1, 3, 3), dtype=np.float32)
        layer.params["weight"][0, 0, 1, 1] = 1.0
        layer.params["bias"][:] = 0.0
        x = np.random.default_rng(0).standard_normal((2, 1, 5, 6)).astype(np.float32)
        assert np.allclose(layer.forward(x), x, atol=1e-6)

    def test_ones_kernel_counts_neighborhood(self):
        layer = Conv2D(1, 1)
        layer.params["weight"] = np.ones((1, 1, 3, 3), dtype=np.float32)
        layer.params["bias"][:] = 0.0
        x = np.ones((1, 1, 4, 4), dtype=np.float32)
        out = layer.forward(x)[0, 0]
        assert out[1, 1] == 9
        assert out[0, 0] == 4
        assert out[0, 1] == 6

    def test_shape_law_with_padding(self):
        layer = Conv2D(1, 8)
        x = np.zeros((1, 1, 128, 126), dtype=np.float32)
        assert layer.forward(x).shape == (1, 8, 128, 126)

    def test_channel_mismatch(self):
        layer = Conv2D(3, 4)
        with pytest.raises(ShapeMismatch):
            layer.forward(np.zeros((1, 2, 8, 8), dtype=np.float32))


class TestBatchNorm:
    def test_train_normalizes_per_channel(self):
        layer = BatchNorm2D(3)
        x = np.random.default_rng(1).standard_normal((8, 3, 6, 5)) * 4 + 2
        out = layer.forward(x, train=True)
        assert np.abs(out.mean(axis=(0, 2, 3))).max() < 1e-6
        assert np.abs(out.var(axis=(0, 2, 3)) - 1).max() < 1e-4

    def test_eval_identity_with_unit_stats(self):
        layer = BatchNorm2D(2)
        x = np.random.default_rng(2).standard_normal((2, 2, 4, 4))
        out = layer.forward(x, train=False)
        assert np.allclose(out, x, atol=1e-4)

    def test_constant_channel_zeros(self):
        layer = BatchNorm2D(1)
        x = np.full((4, 1, 3, 3), 5.0)
        out = layer.forward(x, train=True)
        assert np.abs(out).max() < 1e-3

    def test_degenerate_batch(self):
        layer = BatchNorm2D(1)
        with pytest.raises(DegenerateBatch):
            layer.forward(np.ones((1, 1, 1, 1)), train=True)

    def test_train_eval_consistency_after_convergence(self):
        layer = BatchNorm2D(2)
        rng = np.random.default_rng(3)
        x = rng.standard_normal((16, 2, 8, 8))
        for _ in range(300):
            layer.forward(x, train=True)
        train_out = layer.forward(x, train=True)
        eval_out = layer.forward(x, train=False)
        assert np.abs(train_out - eval_out).max() < 1e-3


class TestMaxPool:
    def test_single_window(self):
        out = MaxPool2D().forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 4.0

    def test_halving_law(self):
        out = MaxPool2D().forward(np.zeros((1, 8, 128, 126)))
        assert out.shape == (1, 8, 64, 63)

    def test_odd_dims_floor(self):
        out = MaxPool2D().forward(np.zeros((1, 1, 5, 5)))
        assert out.shape == (1, 1, 2, 2)


class TestDenseAndActivations:
    def test_sigmoid_symmetry_point(self):
        assert Sigmoid().forward(np.array([0.0]))[0] == pytest.approx(0.5)

    def test_relu_definition(self):
        out = ReLU().forward(np.array([-3.2, 3.2]))
        assert out.tolist() == [0.0, 3.2]

    def test_sigmoid_extreme_negative_no_overflow(self):
        with np.errstate(over="raise", invalid="raise"):
            out = Sigmoid().forward(np.array([-710.0]))
        assert out[0] == pytest.approx(0.0, abs=1e-300)
        assert np.isfinite(out).all()

    def test_dense_affine(self):
        layer = Dense(3, 2)
        layer.params["weight"] = np.array([[1.0, 0, 0], [0, 2.0, 0]], dtype=np.float32)
        layer.params["bias"] = np.array([0.5, -1.0], dtype=np.float32)
        out = layer.forward(np.array([[1.0, 2.0, 3.0]], dtype=np.float32))
        assert np.allclose(out, [[1.5, 3.0]])

    def test_dense_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            Dense(3, 2).forward(np.zeros((1, 4), dtype=np.float32))


class TestBce:
    def test_half_prediction(self):
        loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
        assert loss == pytest.approx(np.log(2), rel=1e-6)

    def test_perfect_prediction(self):
        loss, _ = bce_loss(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert loss <= 1e-6

    def test_hand_arithmetic(self):
        loss, _ = bce_loss(np.array([0.9, 0.2]), np.array([1.0, 0.0]))
        expected = np.mean([-np.log(0.9), -np.log(0.8)])
        assert loss == pytest.approx(expected, rel=1e-9)
        assert loss == pytest.approx(0.164252, abs=1e-6)

    def test_non_negative(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            p = rng.uniform(0, 1, 16)
            y = (rng.uniform(0, 1, 16) > 0.5).astype(float)
            loss, _ = bce_loss(p, y)
            assert loss >= 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            bce_loss(np.zeros(3), np.zeros(4))

    def test_fused_logit_gradient(self):
        p = np.array([[0.7, 0.2]])
        y = np.array([[1.0, 0.0]])
        g = bce_grad_logits(p, y)
        assert np.allclose(g, (p - y) / p.size)


class TestBackward:
    def test_stale_cache(self):
        net = Network([Dense(3, 2)])
        with pytest.raises(StaleCache):
            net.backward(np.zeros((1, 2)))

    def test_zero_grad_in_zero_grads_out(self):
        net = Network([Conv2D(1, 2), ReLU(), Flatten(), Dense(2 * 4 * 4, 3)])
        x = np.random.default_rng(5).standard_normal((2, 1, 4, 4)).astype(np.float32)
        net.forward(x)
        net.backward(np.zeros((2, 3), dtype=np.float32))
        for _, layer, key in net.trainable_params():
            assert np.all(layer.grads[key] == 0)

    def test_dense_outer_product_rule(self):
        layer = Dense(3, 2)
        x = np.array([[1.0, -2.0, 0.5]], dtype=np.float64)
        dy = np.array([[0.3, -0.7]], dtype=np.float64)
        layer.forward(x)
        layer.backward(dy)
        assert np.allclose(layer.grads["weight"], np.outer(dy[0], x[0]))

    def test_gradcheck_each_layer_type(self):
        rng = np.random.default_rng(6)
        cases = [
            (Network([Conv2D(2, 3, rng=rng)]), (3, 2, 6, 5)),
            (Network([BatchNorm2D(2)]), (3, 2, 6, 5)),
            (Network([MaxPool2D()]), (3, 2, 6, 5)),
            (Network([Dense(7, 4, rng=rng)]), (4, 7)),
            (Network([ReLU()]), (4, 9)),
            (Network([Sigmoid()]), (4, 9)),
            (Network([Flatten()]), (4, 2, 3, 3)),
        ]
        for net, shape in cases:
            net.astype(np.float64)
            x = rng.standard_normal(shape)
            err = check_network(net, x, rng=np.random.default_rng(7))
            assert err < 1e-4, type(net.layers[0]).__name__


class TestAdam:
    def test_first_step_magnitude(self):
        net = Network([Dense(2, 2)])
        net.layers[0].params["weight"] = np.array([[1.0, 1.0], [1.0, 1.0]], dtype=np.float64)
        opt = Adam(net, lr=1e-3)
        net.layers[0].grads = {
            "weight": np.array([[0.5, -2.0], [1.0, -0.1]]),
            "bias": np.zeros(2),
        }
        before = net.layers[0].params["weight"].copy()
        opt.step()
        delta = net.layers[0].params["weight"] - before
        g = np.array([[0.5, -2.0], [1.0, -0.1]])
        assert np.allclose(np.abs(delta), 1e-3, rtol=1e-3)
        assert np.all(np.sign(delta) == -np.sign(g))

    def test_zero_gradient_fixed_point(self):
        net = Network([Dense(2, 2)])
        before = net.layers[0].params["weight"].copy()
        opt = Adam(net)
        net.layers[0].grads = {"weight": np.zeros((2, 2)), "bias": np.zeros(2)}
        for _ in range(10):
            opt.step()
        assert np.array_equal(net.layers[0].params["weight"], before)

    def test_deterministic_trajectory(self):
        def run():
            rng = np.random.default_rng(8)
            net = Network([Dense(4, 3, rng=np.random.default_rng(9))])
            opt = Adam(net, lr=1e-2)
            x = rng.standard_normal((8, 4))
            y = (rng.random((8, 3)) > 0.5).astype(np.float64)
            for _ in range(5):
                out = Sigmoid().forward(net.forward(x))
                net.layers[0].grads["weight"] = ((out - y) / y.size).T @ x
                net.layers[0].grads["bias"] = ((out - y) / y.size).sum(0)
                opt.step()
            return net.layers[0].params["weight"]

        assert np.array_equal(run(), run())


class TestWeightStore:
    def make_net(self, seed=0):
        rng = np.random.default_rng(seed)
        return Network(
            [
                Conv2D(1, 4, rng=rng),
                BatchNorm2D(4),
                ReLU(),
                MaxPool2D(),
                Flatten(),
                Dense(4 * 4 * 3, 3, rng=rng),
                Sigmoid(),
            ]
        )

    def test_round_trip_bit_identical_forward(self):
        net = self.make_net()
        x = np.random.default_rng(1).standard_normal((2, 1, 8, 7)).astype(np.float32)
        # push running stats off their init values first
        net.forward(x, train=True)
        expected = net.forward(x)
        loaded, _ = load_weights(save_weights(net))
        assert np.array_equal(loaded.forward(x), expected)

    def test_bad_magic(self):
        data = bytearray(save_weights(self.make_net()))
        data[:4] = b"XXXX"
        with pytest.raises(BadMagic):
            load_weights(bytes(data))

    def test_truncated_payload(self):
        data = save_weights(self.make_net())
        with pytest.raises(TruncatedPayload):
            load_weights(data[:-10])

    def test_shape_edit_detected(self):
        net = self.make_net()
        entries = unpack_entries(save_weights(net))
        hacked = []
        for name, arr in entries:
            if name == "L00.weight":
                arr = arr[:, :, :2, :2]
            hacked.append((name, arr))
        with pytest.raises(ShapeMismatchOnLoad):
            load_weights_into(net, pack_entries(hacked))

    def test_meta_entries(self):
        data = save_weights(self.make_net(), meta={"role": np.array([2.0])})
        _, meta = load_weights(data)
        assert meta["role"][0] == 2.0

    def test_forward_determinism_across_runs(self):
        net = self.make_net(seed=3)
        x = np.random.default_rng(2).standard_normal((1, 1, 8, 7)).astype(np.float32)
        outs = [net.forward(x) for _ in range(3)]
        assert all(np.array_equal(outs[0], o) for o in outs[1:])
