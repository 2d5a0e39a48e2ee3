import numpy as np
import pytest

from fpclass.errors import ConfigError, InvalidArgumentError, ShapeError, StateError
from fpclass.layers import (
    Conv2d,
    Dense,
    Dropout,
    MaxPool2d,
    ReLU,
    conv_output_size,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_batch,
)
from fpclass.rng import RngStream

from .oracles import naive_conv2d


def make_conv(c_in, c_out, k, stride=1, padding=0, groups=1, dtype=np.float64):
    return Conv2d(c_in, c_out, (k, k), stride, padding, groups, dtype=dtype)


class TestConv2d:
    def test_hand_example(self):
        conv = make_conv(1, 1, 2)
        conv.weights.value[...] = 1.0
        x = np.arange(1.0, 10.0).reshape(1, 3, 3)
        out = conv.forward(x)
        assert np.array_equal(out, [[[12.0, 16.0], [24.0, 28.0]]])

    def test_identity_kernel(self):
        conv = make_conv(1, 1, 1)
        conv.weights.value[...] = 1.0
        x = RngStream(0).generator.standard_normal((1, 5, 7))
        assert np.allclose(conv.forward(x), x)

    def test_first_layer_shape(self):
        conv = make_conv(1, 96, 11, stride=4)
        out = conv.forward(np.zeros((1, 227, 227)))
        assert out.shape == (96, 55, 55)

    def test_matches_naive_oracle(self):
        gen = RngStream(3).generator
        for groups in (1, 2):
            for _ in range(5):
                c_in = int(gen.integers(1, 3)) * groups
                c_out = int(gen.integers(1, 3)) * groups
                k = int(gen.integers(1, 4))
                stride = int(gen.integers(1, 3))
                pad = int(gen.integers(0, 2))
                size = k + int(gen.integers(0, 5))
                conv = make_conv(c_in, c_out, k, stride, pad, groups)
                conv.weights.value[...] = gen.standard_normal(conv.weights.value.shape)
                conv.biases.value[...] = gen.standard_normal(c_out)
                x = gen.standard_normal((c_in, size, size))
                fast = conv.forward(x)
                slow = naive_conv2d(x, conv.weights.value, conv.biases.value,
                                    stride, pad, groups)
                assert np.allclose(fast, slow, rtol=1e-6, atol=1e-9)

    def test_groups_one_equals_ungrouped(self):
        gen = RngStream(4).generator
        grouped = make_conv(4, 4, 3, groups=1)
        x = gen.standard_normal((4, 6, 6))
        grouped.weights.value[...] = gen.standard_normal(grouped.weights.value.shape)
        out1 = grouped.forward(x)
        # same weights through the naive ungrouped oracle
        out2 = naive_conv2d(x, grouped.weights.value, grouped.biases.value, 1, 0, 1)
        assert np.allclose(out1, out2)

    def test_indivisible_grouping_rejected(self):
        with pytest.raises(ConfigError):
            make_conv(3, 4, 3, groups=2)

    def test_kernel_larger_than_input(self):
        conv = make_conv(1, 1, 5)
        with pytest.raises(ShapeError):
            conv.forward(np.zeros((1, 3, 3)))

    def test_backward_before_forward(self):
        with pytest.raises(StateError):
            make_conv(1, 1, 2).backward(np.zeros((1, 1, 1)))

    def test_zero_grad_out(self):
        conv = make_conv(2, 2, 2, groups=2, dtype=np.float64)
        conv.weights.value[...] = 1.0
        out = conv.forward(np.ones((2, 4, 4)))
        grad_in = conv.backward(np.zeros_like(out))
        assert not grad_in.any()
        assert not conv.weights.grad.any()
        assert not conv.biases.grad.any()

    def test_scalar_chain_rule(self):
        conv = make_conv(1, 1, 1)
        conv.weights.value[...] = 3.0
        x = np.array([[[2.0]]])
        conv.forward(x)
        grad_in = conv.backward(np.array([[[5.0]]]))
        assert conv.weights.grad.item() == 10.0  # grad_out * x
        assert grad_in.item() == 15.0  # grad_out * w
        assert conv.biases.grad.item() == 5.0


class TestMaxPool:
    def test_single_window(self):
        pool = MaxPool2d((2, 2), 2)
        out = pool.forward(np.array([[[1.0, 3.0], [2.0, 4.0]]]))
        assert np.array_equal(out, [[[4.0]]])

    def test_table_chain_shape(self):
        pool = MaxPool2d((3, 3), 2)
        out = pool.forward(np.zeros((96, 55, 55)))
        assert out.shape == (96, 27, 27)

    def test_window_larger_than_input(self):
        with pytest.raises(ShapeError):
            MaxPool2d((3, 3), 2).forward(np.zeros((1, 2, 2)))

    def test_tie_break_sends_full_gradient_to_one_element(self):
        pool = MaxPool2d((2, 2), 2)
        x = np.ones((1, 4, 4))
        out = pool.forward(x)
        grad = pool.backward(np.ones_like(out))
        # one winner per window, at the lowest flat index (top-left)
        assert grad.sum() == out.size
        assert np.array_equal(grad[0, ::2, ::2], np.ones((2, 2)))
        assert grad[0, 1::2, :].sum() == 0

    def test_overlapping_windows_accumulate(self):
        pool = MaxPool2d((3, 3), 2)
        x = np.zeros((1, 5, 5))
        x[0, 2, 2] = 9.0  # center belongs to all four windows
        out = pool.forward(x)
        grad = pool.backward(np.ones_like(out))
        assert grad[0, 2, 2] == 4.0


class TestReLU:
    def test_values(self):
        out = ReLU().forward(np.array([-1.0, 0.0, 2.0]))
        assert np.array_equal(out, [0.0, 0.0, 2.0])

    def test_all_positive_identity(self):
        x = np.array([0.5, 1.0, 3.0])
        assert np.array_equal(ReLU().forward(x), x)

    def test_backward_mask(self):
        relu = ReLU()
        relu.forward(np.array([-1.0, 2.0]))
        assert np.array_equal(relu.backward(np.array([5.0, 7.0])), [0.0, 7.0])


class TestDropout:
    def test_rate_zero_identity(self):
        x = RngStream(0).generator.standard_normal((3, 3))
        layer = Dropout(0.0, RngStream(1))
        assert np.array_equal(layer.forward(x, train=True), x)
        assert np.array_equal(layer.forward(x, train=False), x)

    def test_infer_mode_identity(self):
        x = RngStream(0).generator.standard_normal((3, 3))
        assert np.array_equal(Dropout(0.9, RngStream(1)).forward(x, train=False), x)

    def test_rate_one_rejected(self):
        with pytest.raises(InvalidArgumentError):
            Dropout(1.0)
        with pytest.raises(InvalidArgumentError):
            Dropout(-0.1)

    def test_expectation_preserved(self):
        x = np.ones(100_000)
        out = Dropout(0.5, RngStream(12)).forward(x, train=True)
        assert abs(out.mean() - 1.0) < 0.02

    def test_backward_uses_same_mask(self):
        layer = Dropout(0.5, RngStream(3))
        x = np.ones((100,))
        out = layer.forward(x, train=True)
        grad = layer.backward(np.ones_like(out))
        assert np.array_equal(grad, out)


class TestSoftmax:
    def test_uniform(self):
        assert np.allclose(softmax(np.zeros(5)), 0.2)

    def test_two_logit_example(self):
        assert np.allclose(softmax(np.array([0.0, np.log(3.0)])), [0.25, 0.75])

    def test_shift_invariance(self):
        gen = RngStream(9).generator
        for _ in range(20):
            a = gen.standard_normal(5)
            c = gen.standard_normal()
            assert np.allclose(softmax(a), softmax(a + c), atol=1e-12)

    def test_sums_to_one(self):
        gen = RngStream(10).generator
        for _ in range(50):
            p = softmax(gen.standard_normal(5) * 5)
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all(p > 0) and np.all(p < 1)
        # extreme logits still sum to one within tolerance
        p = softmax(gen.standard_normal(5) * 50)
        assert abs(p.sum() - 1.0) < 1e-12

    def test_nan_rejected(self):
        with pytest.raises(InvalidArgumentError):
            softmax(np.array([0.0, np.nan]))


class TestSoftmaxCrossEntropy:
    def test_uniform_loss(self):
        loss, _ = softmax_cross_entropy(np.zeros(5), 0)
        assert abs(loss - np.log(5)) < 1e-12

    def test_confident_limit(self):
        logits = np.array([40.0, 0.0, 0.0, 0.0, 0.0])
        loss, _ = softmax_cross_entropy(logits, 0)
        assert loss < 1e-12

    def test_gradient_formula(self):
        logits = np.array([1.0, -2.0, 0.5])
        loss, grad = softmax_cross_entropy(logits, 2)
        expected = softmax(logits)
        expected[2] -= 1.0
        assert np.allclose(grad, expected)

    def test_index_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            softmax_cross_entropy(np.zeros(5), 5)

    def test_batch_matches_single(self):
        gen = RngStream(13).generator
        logits = gen.standard_normal((4, 5))
        labels = gen.integers(0, 5, size=4)
        loss_b, grad_b = softmax_cross_entropy_batch(logits, labels)
        singles = [softmax_cross_entropy(logits[i], labels[i]) for i in range(4)]
        assert abs(loss_b - np.mean([s[0] for s in singles])) < 1e-12
        assert np.allclose(grad_b, np.stack([s[1] for s in singles]) / 4)

    def test_saturated_logits_finite(self):
        loss, grad = softmax_cross_entropy(np.array([1000.0, 0.0]), 1)
        assert np.isfinite(loss) and loss == pytest.approx(1000.0)
        assert np.isfinite(grad).all()


class TestDense:
    def test_identity(self):
        layer = Dense(3, 3, dtype=np.float64)
        layer.weights.value[...] = np.eye(3)
        x = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(layer.forward(x), x)

    def test_hand_matvec(self):
        layer = Dense(2, 2, dtype=np.float64)
        layer.weights.value[...] = [[1.0, 2.0], [3.0, 4.0]]
        layer.biases.value[...] = [1.0, 1.0]
        assert np.array_equal(layer.forward(np.array([1.0, 1.0])), [4.0, 8.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            Dense(3, 2).forward(np.zeros(4))


def test_shape_formula_property():
    gen = RngStream(14).generator
    for _ in range(200):
        h = int(gen.integers(1, 60))
        k = int(gen.integers(1, 12))
        s = int(gen.integers(1, 5))
        p = int(gen.integers(0, 4))
        if k > h + 2 * p:
            with pytest.raises(ShapeError):
                conv_output_size(h, k, s, p)
            continue
        out = conv_output_size(h, k, s, p)
        assert out == (h + 2 * p - k) // s + 1
        assert out >= 1
        # brute-force count of valid window positions
        positions = [i for i in range(0, h + 2 * p - k + 1, s)]
        assert out == len(positions)
