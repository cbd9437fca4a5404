import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lzsc.tensor import (ContractError, channel_concat, conv2d_grad_input, conv2d_grad_weights, conv2d_same,
                         sobel_gradient, sobel_gradient_backward)

from conftest import naive_conv


def identity_kernel(C=1, k=3):
    w = np.zeros((C, C, k, k))
    for c in range(C):
        w[c, c, k // 2, k // 2] = 1.0
    return w


class TestConvForward:
    def test_identity_kernel(self, rng):
        x = rng.standard_normal((5, 5, 1))
        assert np.array_equal(conv2d_same(x, identity_kernel()), x)

    def test_zero_input(self, rng):
        w = rng.standard_normal((3, 2, 5, 5))
        assert not conv2d_same(np.zeros((7, 6, 2)), w).any()

    def test_matches_loop_oracle(self, rng):
        x = rng.standard_normal((6, 6, 2))
        w = rng.standard_normal((3, 2, 3, 3))
        assert np.max(np.abs(conv2d_same(x, w) - naive_conv(x, w))) < 1e-12

    @pytest.mark.parametrize("k", [1, 3, 5, 7])
    def test_oracle_various_kernel_sizes(self, rng, k):
        x = rng.standard_normal((7, 9, 3))
        w = rng.standard_normal((2, 3, k, k))
        assert np.max(np.abs(conv2d_same(x, w) - naive_conv(x, w))) < 1e-12

    def test_non_square_kernel(self, rng):
        x = rng.standard_normal((6, 8, 1))
        w = rng.standard_normal((2, 1, 3, 5))
        assert np.max(np.abs(conv2d_same(x, w) - naive_conv(x, w))) < 1e-12

    def test_batched_matches_per_image(self, rng):
        x = rng.standard_normal((3, 8, 8, 2))
        w = rng.standard_normal((4, 2, 5, 5))
        out = conv2d_same(x, w)
        for b in range(3):
            assert np.allclose(out[b], conv2d_same(x[b], w), atol=1e-13)

    def test_linearity(self, rng):
        x, y = rng.standard_normal((2, 8, 8, 2))
        w = rng.standard_normal((3, 2, 5, 5))
        a, b = rng.standard_normal(2)
        lhs = conv2d_same(a * x + b * y, w)
        rhs = a * conv2d_same(x, w) + b * conv2d_same(y, w)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_channel_mismatch(self, rng):
        with pytest.raises(ContractError, match="channel"):
            conv2d_same(rng.standard_normal((4, 4, 2)), rng.standard_normal((1, 3, 3, 3)))

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ContractError):
            conv2d_same(rng.standard_normal((4, 4, 1)), rng.standard_normal((1, 1, 2, 2)))

    def test_float32_stays_float32(self, rng):
        x = rng.standard_normal((6, 6, 1)).astype(np.float32)
        w = rng.standard_normal((2, 1, 3, 3)).astype(np.float32)
        out = conv2d_same(x, w)
        assert out.dtype == np.float32
        assert np.allclose(out, naive_conv(x.astype(float), w.astype(float)), atol=1e-5)


class TestConvBackward:
    def test_identity_grad_input(self, rng):
        g = rng.standard_normal((5, 5, 1))
        assert np.array_equal(conv2d_grad_input(g, identity_kernel()), g)

    def test_grad_input_finite_differences(self, rng):
        x = rng.standard_normal((4, 4, 1))
        w = rng.standard_normal((2, 1, 3, 3))
        g = rng.standard_normal((4, 4, 2))
        analytic = conv2d_grad_input(g, w)
        h = 1e-5
        for idx in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            numeric = (np.sum(conv2d_same(xp, w) * g) - np.sum(conv2d_same(xm, w) * g)) / (2 * h)
            assert abs(numeric - analytic[idx]) <= 1e-6 * max(abs(numeric), 1e-8)

    @settings(max_examples=40, deadline=None)
    @given(H=st.integers(1, 9), W=st.integers(1, 9), C=st.integers(1, 3), O=st.integers(1, 4),
           k=st.sampled_from([1, 3, 5]), seed=st.integers(0, 2**32 - 1))
    def test_adjoint_identity(self, H, W, C, O, k, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((H, W, C))
        y = r.standard_normal((H, W, O))
        w = r.standard_normal((O, C, k, k))
        lhs = np.sum(conv2d_same(x, w) * y)
        rhs = np.sum(x * conv2d_grad_input(y, w))
        assert abs(lhs - rhs) < 1e-10

    def test_grad_input_is_flipped_transposed_kernel(self, rng):
        g = rng.standard_normal((6, 6, 3))
        w = rng.standard_normal((3, 2, 5, 5))
        flipped = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        assert np.allclose(conv2d_grad_input(g, w), naive_conv(g, flipped), atol=1e-12)

    def test_grad_weights_finite_differences(self, rng):
        x = rng.standard_normal((4, 4, 1))
        w = rng.standard_normal((1, 1, 3, 3))
        g = rng.standard_normal((4, 4, 1))
        analytic = conv2d_grad_weights(x, g, w.shape)
        h = 1e-5
        for idx in np.ndindex(w.shape):
            wp, wm = w.copy(), w.copy()
            wp[idx] += h
            wm[idx] -= h
            numeric = (np.sum(conv2d_same(x, wp) * g) - np.sum(conv2d_same(x, wm) * g)) / (2 * h)
            assert abs(numeric - analytic[idx]) <= 1e-6 * max(abs(numeric), 1e-8)

    def test_grad_weights_zero(self, rng):
        x = rng.standard_normal((5, 5, 2))
        assert not conv2d_grad_weights(x, np.zeros((5, 5, 3)), (3, 2, 3, 3)).any()

    def test_grad_weights_linear_in_output_grad(self, rng):
        x = rng.standard_normal((6, 7, 2))
        g1, g2 = rng.standard_normal((2, 6, 7, 3))
        shape = (3, 2, 5, 5)
        total = conv2d_grad_weights(x, g1 + g2, shape)
        parts = conv2d_grad_weights(x, g1, shape) + conv2d_grad_weights(x, g2, shape)
        assert np.max(np.abs(total - parts)) < 1e-12

    def test_grad_weights_batched_sums_over_batch(self, rng):
        x = rng.standard_normal((3, 6, 6, 2))
        g = rng.standard_normal((3, 6, 6, 1))
        total = conv2d_grad_weights(x, g, (1, 2, 3, 3))
        each = sum(conv2d_grad_weights(x[b], g[b], (1, 2, 3, 3)) for b in range(3))
        assert np.allclose(total, each, atol=1e-12)

    def test_grad_weights_shape_mismatch(self, rng):
        with pytest.raises(ContractError):
            conv2d_grad_weights(rng.standard_normal((4, 4, 1)), rng.standard_normal((4, 5, 1)), (1, 1, 3, 3))

    def test_spatial_dims_preserved(self, rng):
        x = rng.standard_normal((7, 5, 2))
        w = rng.standard_normal((3, 2, 5, 5))
        assert conv2d_same(x, w).shape == (7, 5, 3)
        assert conv2d_grad_input(rng.standard_normal((7, 5, 3)), w).shape == (7, 5, 2)


class TestSobel:
    def test_constant_interior_zero(self):
        mag = sobel_gradient(np.full((6, 6, 1), 0.7))
        assert not mag[1:-1, 1:-1].any()
        # zero padding makes the border see a step down to 0
        assert mag[0, 3, 0] > 0

    def test_vertical_step_edge(self):
        img = np.zeros((7, 8, 1))
        img[:, 4:] = 1.0
        mag = sobel_gradient(img)
        # columns 3 and 4 straddle the step: 1 + 2 + 1 from the horizontal kernel
        assert np.all(mag[1:-1, 3, 0] == 4.0)
        assert np.all(mag[1:-1, 4, 0] == 4.0)
        assert not mag[1:-1, 1:3].any()

    def test_transpose_symmetry(self, rng):
        img = rng.random((9, 7, 1))
        lhs = sobel_gradient(img.transpose(1, 0, 2))
        rhs = sobel_gradient(img).transpose(1, 0, 2)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_nonnegative(self, rng):
        assert (sobel_gradient(rng.standard_normal((10, 10, 1))) >= 0).all()

    def test_rejects_multichannel(self, rng):
        with pytest.raises(ContractError):
            sobel_gradient(rng.random((5, 5, 2)))

    def test_backward_matches_finite_differences(self, rng):
        img = rng.random((6, 6, 1))
        g = rng.standard_normal((6, 6, 1))
        analytic = sobel_gradient_backward(img, g)
        h = 1e-6
        for idx in np.ndindex(img.shape):
            p, m = img.copy(), img.copy()
            p[idx] += h
            m[idx] -= h
            numeric = (np.sum(sobel_gradient(p) * g) - np.sum(sobel_gradient(m) * g)) / (2 * h)
            assert abs(numeric - analytic[idx]) < 1e-6


class TestConcat:
    def test_shape(self, rng):
        a, b = rng.random((2, 4, 5, 1))
        assert channel_concat(a, b).shape == (4, 5, 2)

    def test_recover_first(self, rng):
        x = rng.random((4, 5, 1))
        assert np.array_equal(channel_concat(x, np.zeros_like(x))[..., :1], x)

    def test_associative(self, rng):
        a, b, c = rng.random((3, 4, 4, 1))
        lhs = channel_concat(channel_concat(a, b), c)
        rhs = channel_concat(a, channel_concat(b, c))
        assert np.array_equal(lhs, rhs)

    def test_spatial_mismatch(self, rng):
        with pytest.raises(ContractError):
            channel_concat(rng.random((4, 4, 1)), rng.random((4, 5, 1)))
