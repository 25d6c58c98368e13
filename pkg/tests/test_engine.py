"""Tensor engine: op values, backward rules, gradient checks and init."""

import numpy as np
import pytest

from zico_nas.engine import (
    Graph,
    ParamSet,
    Tensor,
    add,
    avg_pool2d,
    backward,
    conv2d,
    conv_layer,
    cross_entropy,
    flatten,
    global_avg_pool,
    grad_check,
    kaiming_init,
    linear,
    linear_layer,
    matmul,
    mse_loss,
    no_grad,
    relative_error,
    relu,
    reshape,
    scale,
    tensor_sum,
)
from zico_nas.engine.tensor import check_finite
from zico_nas.errors import DimensionError, ShapeError, UsageError, ValidationError


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar f at array x."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


class TestMatmul:
    def test_hand_product(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_identity(self):
        a = np.random.default_rng(0).normal(size=(4, 4))
        np.testing.assert_array_equal(matmul(Tensor(a), Tensor(np.eye(4))).data, a)

    def test_grad_of_sum_is_row_sums(self):
        a = Tensor(np.random.default_rng(1).normal(size=(3, 5)), requires_grad=True)
        b = Tensor(np.ones((5, 2)))
        backward(tensor_sum(matmul(a, b)))
        np.testing.assert_array_equal(a.grad, np.full((3, 5), 2.0))

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        backward(mse_loss(matmul(a, b), Tensor(np.zeros((3, 2)))))
        f = lambda: 0.5 * float(((a.data @ b.data) ** 2).sum())
        assert relative_error(a.grad, numeric_grad(f, a.data)) < 1e-6
        assert relative_error(b.grad, numeric_grad(f, b.data)) < 1e-6

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestConv2d:
    def test_hand_value(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        k = Tensor(np.array([[[[1.0, 0.0], [0.0, 1.0]]]]))
        np.testing.assert_array_equal(conv2d(x, k).data, [[[[5.0]]]])

    def test_unit_1x1_kernel_is_identity(self):
        x = np.random.default_rng(0).normal(size=(2, 1, 5, 5))
        np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1)))).data, x)

    def test_no_kernel_flip(self):
        x = Tensor(np.arange(9.0).reshape(1, 1, 3, 3))
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 0, 0] = 1.0
        # top-left tap of a padded 3x3 window at the center reads x[0, 0]
        assert conv2d(x, Tensor(k), pad=1).data[0, 0, 1, 1] == 0.0
        assert conv2d(x, Tensor(k), pad=1).data[0, 0, 2, 2] == 4.0

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_im2col_matches_direct(self, stride, pad):
        rng = np.random.default_rng(stride * 10 + pad)
        x = rng.normal(size=(2, 3, 7, 7))
        k = rng.normal(size=(4, 3, 3, 3))
        a = conv2d(Tensor(x), Tensor(k), stride=stride, pad=pad).data
        b = conv2d(Tensor(x), Tensor(k), stride=stride, pad=pad, method="direct").data
        assert relative_error(a, b, floor=1e-300) < 1e-12

    def test_kernel_grad_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(1, 1, 4, 4)))
        k = Tensor(rng.normal(size=(2, 1, 3, 3)), requires_grad=True)
        loss = lambda: mse_loss(conv2d(x, k, pad=1), Tensor(np.zeros((1, 2, 4, 4))))
        backward(loss())
        assert relative_error(k.grad, numeric_grad(lambda: loss().item(), k.data)) < 1e-6

    def test_input_and_bias_grads(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(2, 2, 5, 5)), requires_grad=True)
        k = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=3), requires_grad=True)
        target = Tensor(rng.normal(size=(2, 3, 2, 2)))
        loss = lambda: mse_loss(conv2d(x, k, b, stride=2), target)
        backward(loss())
        f = lambda: loss().item()
        for t in (x, k, b):
            assert relative_error(t.grad, numeric_grad(f, t.data)) < 1e-6

    def test_non_integral_extent(self):
        with pytest.raises(ShapeError, match="not integral"):
            conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), stride=2)

    def test_kernel_larger_than_input(self):
        with pytest.raises(ShapeError, match="exceeds"):
            conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


class TestRelu:
    def test_values(self):
        np.testing.assert_array_equal(relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_subgradient(self):
        x = Tensor([2.0, -1.0, 0.0], requires_grad=True)
        backward(tensor_sum(relu(x)))
        np.testing.assert_array_equal(x.grad, [1.0, 0.0, 0.0])

    def test_idempotent(self):
        x = Tensor(np.random.default_rng(0).normal(size=50))
        np.testing.assert_array_equal(relu(relu(x)).data, relu(x).data)


class TestElementwiseAndPool:
    def test_add(self):
        np.testing.assert_array_equal(add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).data, [4.0, 6.0])

    def test_add_broadcast_grad(self):
        a = Tensor(np.ones((3, 2)), requires_grad=True)
        b = Tensor(np.ones(2), requires_grad=True)
        backward(tensor_sum(add(a, b)))
        np.testing.assert_array_equal(b.grad, [3.0, 3.0])

    def test_add_mismatch(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.ones(3)), Tensor(np.ones(2)))

    def test_scale_grad(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(tensor_sum(scale(x, 3.0)))
        np.testing.assert_array_equal(x.grad, [3.0, 3.0])

    def test_global_avg_pool_constant(self):
        out = global_avg_pool(Tensor(np.full((2, 3, 4, 4), 1.75)))
        np.testing.assert_array_equal(out.data, np.full((2, 3), 1.75))

    def test_avg_pool_hand(self):
        out = avg_pool2d(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])), 2)
        np.testing.assert_array_equal(out.data, [[[[2.5]]]])

    def test_avg_pool_grad(self):
        x = Tensor(np.random.default_rng(0).normal(size=(1, 2, 4, 4)), requires_grad=True)
        w = np.random.default_rng(1).normal(size=(1, 2, 4, 4))
        loss = lambda: mse_loss(avg_pool2d(x, 3, stride=1, pad=1), Tensor(w))
        backward(loss())
        assert relative_error(x.grad, numeric_grad(lambda: loss().item(), x.data)) < 1e-6

    def test_flatten_and_reshape(self):
        x = Tensor(np.arange(24.0).reshape(2, 3, 2, 2), requires_grad=True)
        assert flatten(x).shape == (2, 12)
        with pytest.raises(DimensionError):
            reshape(x, (5, 5))


class TestLosses:
    @pytest.mark.parametrize("k", [2, 3, 10])
    def test_uniform_logits_give_log_k(self, k):
        loss = cross_entropy(Tensor(np.zeros((4, k))), np.arange(4) % k)
        assert loss.item() == pytest.approx(np.log(k), rel=1e-15)

    def test_saturated_logits(self):
        logits = np.zeros((3, 4))
        labels = np.array([0, 2, 3])
        logits[np.arange(3), labels] = 30.0
        assert cross_entropy(Tensor(logits), labels).item() == pytest.approx(0.0, abs=1e-9)

    def test_cross_entropy_grad(self):
        rng = np.random.default_rng(5)
        z = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        labels = np.array([1, 0, 3])
        backward(cross_entropy(z, labels))
        g = numeric_grad(lambda: cross_entropy(Tensor(z.data), labels).item(), z.data)
        assert relative_error(z.grad, g) < 1e-6

    def test_cross_entropy_label_range(self):
        with pytest.raises(ValidationError):
            cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))

    def test_mse_values(self):
        assert mse_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0
        assert mse_loss(Tensor([1.0]), Tensor([0.0])).item() == 0.5
        assert mse_loss(Tensor([0.5 * 1.0]), Tensor([0.5])).item() == 0.0

    def test_mse_mismatch(self):
        with pytest.raises(DimensionError):
            mse_loss(Tensor([1.0]), Tensor([1.0, 2.0]))


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 2)), requires_grad=True)
        backward(tensor_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((3, 2)))

    def test_half_square_gives_x(self):
        x = Tensor(np.random.default_rng(0).normal(size=5), requires_grad=True)
        backward(mse_loss(x, Tensor(np.zeros(5))))
        np.testing.assert_array_equal(x.grad, x.data)

    def test_accumulates_until_reset(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(tensor_sum(x))
        backward(tensor_sum(x))
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])
        x.zero_grad()
        assert x.grad is None

    def test_non_scalar_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(UsageError):
            backward(scale(x, 2.0))

    def test_visits_each_node_once(self):
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        w = Tensor(np.ones((3, 3)), requires_grad=True)
        h = relu(matmul(x, w))
        loss = tensor_sum(add(h, h))
        visits = backward(loss)
        assert visits == len(loss.graph) == 4

    def test_graph_inputs_precede_outputs(self):
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        loss = tensor_sum(relu(matmul(x, Tensor(np.ones((3, 1)), requires_grad=True))))
        graph: Graph = loss.graph
        for nid, node in enumerate(graph.nodes):
            for inp in node.inputs:
                assert inp.node_id is None or inp.node_id < nid

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = scale(x, 2.0)
        assert y.graph is None and not y.requires_grad

    def test_check_finite(self):
        with pytest.raises(ValidationError):
            check_finite(Tensor([np.nan]))


class TestInitAndGradCheck:
    def test_kaiming_variance(self):
        layer = linear_layer(1, 8, 100_000)
        kaiming_init(ParamSet([layer]), seed=0)
        assert abs(layer.weight.data.var() / 0.25 - 1) < 0.05
        np.testing.assert_array_equal(layer.bias.data, 0.0)

    def test_kaiming_deterministic(self):
        a, b = conv_layer(1, 3, 4, 3), conv_layer(1, 3, 4, 3)
        kaiming_init(ParamSet([a]), 7)
        kaiming_init(ParamSet([b]), 7)
        np.testing.assert_array_equal(a.weight.data, b.weight.data)

    def test_zero_fan_in(self):
        with pytest.raises(ValidationError):
            kaiming_init(ParamSet([linear_layer(1, 0, 3)]), 0)

    def test_layer_indices_contiguous(self):
        with pytest.raises(ValidationError):
            ParamSet([linear_layer(2, 3, 3)])

    def test_linear_model(self):
        rng = np.random.default_rng(0)
        layer = linear_layer(1, 4, 3)
        kaiming_init(ParamSet([layer]), 0)
        x = rng.normal(size=(5, 4))
        report = grad_check(lambda: cross_entropy(layer(Tensor(x)), np.arange(5) % 3), layer.tensors())
        assert report.max_error < 1e-8

    def test_conv_relu_gap_linear(self):
        rng = np.random.default_rng(1)
        conv, head = conv_layer(1, 2, 3, 3), linear_layer(2, 3, 4)
        params = ParamSet([conv, head])
        kaiming_init(params, 1)
        conv.bias.data = rng.normal(size=3) * 0.1
        x = rng.normal(size=(3, 2, 5, 5))
        loss = lambda: cross_entropy(head(global_avg_pool(relu(conv(Tensor(x))))), np.array([0, 1, 3]))
        report = grad_check(loss, params.named())
        assert report.ok and report.max_error < 1e-5

    def test_zero_parameter_network(self):
        report = grad_check(lambda: tensor_sum(Tensor([1.0, 2.0])), [])
        assert report.errors == {} and report.ok

    def test_size_limit(self):
        with pytest.raises(ValidationError):
            grad_check(lambda: None, [("w", Tensor(np.zeros(10_000)))])

    def test_forward_deterministic(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 6, 6))
        k = np.random.default_rng(1).normal(size=(4, 3, 3, 3))
        a = conv2d(Tensor(x), Tensor(k), pad=1).data
        b = conv2d(Tensor(x), Tensor(k), pad=1).data
        assert a.tobytes() == b.tobytes()
