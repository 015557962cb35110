import numpy as np
import pytest

from mbpinn import autodiff as ad
from mbpinn.autodiff import LayoutError, ParamVector, Tensor, value_and_grad
from mbpinn.nets import Network, NetworkSpec, eval_with_spatial_derivs, init_params

from fd_oracle import ARCHITECTURES, check_draw, rel_err


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestTensorOps:
    @pytest.mark.parametrize("op", [
        lambda t: (t * t).sum(),
        lambda t: (ad.sin(t) * ad.cos(t)).sum(),
        lambda t: (ad.exp(t * 0.3) / (t.square() + 1.0)).sum(),
        lambda t: ad.log(t.square() + 2.0).sum(),
        lambda t: (t[1:] - t[:-1]).square().sum(),
        lambda t: (2.0 - t).reciprocal().sum(),
        lambda t: (t.reshape(2, 3) * np.arange(3.0)).sum(),
        lambda t: ad.concat([t.reshape(2, 3), -t.reshape(2, 3)]).square().sum(),
    ])
    def test_gradient_matches_fd(self, op):
        x = np.random.default_rng(1).uniform(-0.9, 0.9, 6)
        _, g = value_and_grad(op, x)
        fd = _fd_grad(lambda v: float(op(Tensor(v)).value), x)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)

    def test_half_squared_norm(self):
        theta = np.array([0.3, -1.2, 2.0])
        value, g = value_and_grad(lambda t: t.square().sum() * 0.5, theta)
        assert value == pytest.approx(0.5 * theta @ theta)
        np.testing.assert_allclose(g, theta)

    def test_single_weight_times_input(self):
        _, g = value_and_grad(lambda w: (w * 2.0).sum(), np.array([0.7]))
        np.testing.assert_allclose(g, [2.0])

    def test_broadcast_gradient_is_reduced(self):
        b = np.array([0.1, 0.2, 0.3])
        y = np.ones((4, 3))
        _, g = value_and_grad(lambda t: (Tensor(y) + t).square().sum(), b)
        np.testing.assert_allclose(g, 2 * 4 * (1 + b))

    def test_linear_layer(self):
        rng = np.random.default_rng(2)
        y, W = rng.standard_normal((5, 3)), rng.standard_normal((4, 3))
        out = ad.linear(Tensor(y), Tensor(W), Tensor(np.ones(4)))
        np.testing.assert_allclose(out.value, y @ W.T + 1.0)

    def test_linearity_of_gradients(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(8)

        def l1(t):
            return ad.sin(t).square().sum()

        def l2(t):
            return (t * t * t).sum()

        a, b = 1.7, -0.4
        _, g1 = value_and_grad(l1, x)
        _, g2 = value_and_grad(l2, x)
        _, g = value_and_grad(lambda t: l1(t) * a + l2(t) * b, x)
        np.testing.assert_allclose(g, a * g1 + b * g2, rtol=1e-13, atol=1e-13)

    def test_ndarray_on_the_left_defers_to_tensor(self):
        out = np.ones(3) + Tensor(np.ones(3))
        assert isinstance(out, Tensor)
        np.testing.assert_array_equal(out.value, 2.0)


class TestJets:
    def test_single_sine_unit_at_zero(self):
        net = Network(NetworkSpec.plain(1, (1,)))
        params = ParamVector.flatten({"W1": [[1.0]], "b1": [0.0], "WO": [[1.0]], "bO": [0.0]},
                                     net.layout)
        jv = eval_with_spatial_derivs(net, params, 0.0)
        assert (jv.value, jv.d1[0], jv.d2[0]) == (0.0, 1.0, 0.0)

    def test_affine_jet(self):
        jet = ad.jet_linear(ad.jet_input(np.array([[0.3]])), Tensor(np.array([[1.0]])),
                            Tensor(np.array([0.0])))
        dense = ad.jet_dense(jet)
        assert dense.value.value[0, 0] == pytest.approx(0.3)
        assert dense.d1[0].value[0, 0] == 1.0
        assert dense.d2[0].value[0, 0] == 0.0

    def test_sine_unit_second_derivative(self):
        x = np.array([[0.8]])
        jet = ad.jet_dense(ad.jet_sin(ad.jet_input(x)))
        assert jet.d1[0].value[0, 0] == pytest.approx(np.cos(0.8))
        assert jet.d2[0].value[0, 0] == pytest.approx(-np.sin(0.8))

    def test_random_two_layer_net_at_037(self):
        rng = np.random.default_rng(4)
        spec = NetworkSpec.plain(1, (30, 30))
        net, params = Network(spec), init_params(spec, rng)
        jv = eval_with_spatial_derivs(net, params, 0.37)
        h = 1e-4

        def f(x):
            return eval_with_spatial_derivs(net, params, x).value

        fd1 = (f(0.37 + h) - f(0.37 - h)) / (2 * h)
        fd2 = (f(0.37 + h) - 2 * f(0.37) + f(0.37 - h)) / h**2
        assert rel_err(jv.d1, [fd1]) <= 1e-5
        assert rel_err(jv.d2, [fd2]) <= 1e-5

    @pytest.mark.parametrize("index", range(len(ARCHITECTURES)))
    def test_fd_oracle_per_architecture(self, index):
        arch, dim = ARCHITECTURES[index]
        rng = np.random.default_rng(100 + index)
        for _ in range(3):
            errs = check_draw(arch, dim, rng)
            assert max(errs.values()) <= 1e-5, errs


class TestParamVector:
    def test_round_trip(self):
        layout = (("a", (2, 3)), ("b", (3,)))
        values = np.arange(9.0)
        pv = ParamVector(values, layout)
        again = ParamVector.flatten(pv.unflatten(), layout)
        np.testing.assert_array_equal(again.values, values)
        assert len(pv) == 9

    def test_size_mismatch(self):
        with pytest.raises(LayoutError):
            ParamVector(np.zeros(5), (("a", (2, 3)),))

    def test_tensor_unflatten_shares_graph(self):
        layout = (("a", (2,)), ("b", (2, 2)))
        _, g = value_and_grad(lambda t: ad.unflatten(t, layout)["b"].sum(), np.ones(6))
        np.testing.assert_array_equal(g, [0, 0, 1, 1, 1, 1])


class TestPurity:
    def test_bit_identical_repeat(self):
        rng = np.random.default_rng(5)
        spec = NetworkSpec.fourier(2, [1.0, 5.0], (12, 12))
        net, params = Network(spec), init_params(spec, rng)
        x = rng.uniform(size=(7, 2))
        a = net.jet(params.unflatten(), x)
        b = net.jet(params.unflatten(), x)
        np.testing.assert_array_equal(a.value.value, b.value.value)
        for ta, tb in zip(a.d2, b.d2):
            np.testing.assert_array_equal(ta.value, tb.value)
