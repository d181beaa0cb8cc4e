import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import loop_conv
from drpn.tensor import (
    channel_scale,
    conv2d,
    conv2d_direct,
    count_ops,
    flatten_spatial,
    identity_kernel,
    kernel_channel_scale,
    matmul,
    pad_kernel_to_3x3,
    softmax_over_branches,
    unflatten_spatial,
)


class TestConv2d:
    def test_identity_kernel_reproduces_input(self, rng):
        x = rng.normal(size=(1, 1, 4, 4))
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1.0
        np.testing.assert_array_equal(conv2d(x, k, 1, 1), x)

    def test_all_ones_window_sums(self):
        out = conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), 1, 1)
        assert out[0, 0, 1, 1] == 9
        assert out[0, 0, 0, 0] == out[0, 0, 0, 2] == out[0, 0, 2, 0] == out[0, 0, 2, 2] == 4
        assert out[0, 0, 0, 1] == 6

    def test_matches_loop_oracle(self, rng):
        x = rng.normal(size=(1, 2, 5, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        np.testing.assert_allclose(conv2d(x, k, 1, 1), loop_conv(x, k, 1, 1), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kh,kw,ph,pw", [(3, 3, 1, 1), (1, 3, 0, 1), (3, 1, 1, 0), (1, 1, 0, 0), (3, 3, 0, 0)])
    def test_fast_path_matches_direct(self, rng, kh, kw, ph, pw):
        x = rng.normal(size=(2, 3, 6, 7))
        k = rng.normal(size=(4, 3, kh, kw))
        np.testing.assert_allclose(conv2d(x, k, ph, pw), conv2d_direct(x, k, ph, pw), atol=1e-12)
        np.testing.assert_allclose(conv2d_direct(x, k, ph, pw), loop_conv(x, k, ph, pw), atol=1e-12)

    def test_output_shape(self, rng):
        out = conv2d(rng.normal(size=(2, 3, 5, 8)), rng.normal(size=(4, 3, 3, 1)), 0, 2)
        assert out.shape == (2, 4, 3, 12)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ValueError, match="channel"):
            conv2d(rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(1, 3, 3, 3)), 1, 1)

    def test_empty_output(self, rng):
        with pytest.raises(ValueError, match="empty"):
            conv2d(rng.normal(size=(1, 1, 2, 2)), rng.normal(size=(1, 1, 3, 3)))

    def test_linear_in_input(self, rng):
        x, y = rng.normal(size=(2, 1, 3, 6, 6))
        k = rng.normal(size=(2, 3, 3, 3))
        a, b = rng.normal(size=2)
        np.testing.assert_allclose(
            conv2d(a * x + b * y, k, 1, 1), a * conv2d(x, k, 1, 1) + b * conv2d(y, k, 1, 1), atol=1e-10
        )

    def test_distributes_over_kernel_sum(self, rng):
        x = rng.normal(size=(1, 3, 6, 6))
        k1, k2 = rng.normal(size=(2, 2, 3, 3, 3))
        np.testing.assert_allclose(
            conv2d(x, k1 + k2, 1, 1), conv2d(x, k1, 1, 1) + conv2d(x, k2, 1, 1), atol=1e-10
        )

    def test_pure(self, rng):
        x = rng.normal(size=(1, 3, 6, 6))
        k = rng.normal(size=(2, 3, 3, 3))
        assert conv2d(x, k, 1, 1).tobytes() == conv2d(x, k, 1, 1).tobytes()

    def test_counter(self):
        with count_ops() as c:
            conv2d(np.ones((2, 3, 4, 4)), np.ones((5, 3, 3, 3)), 1, 1)
        assert c.conv_calls == 2
        assert c.conv_macs == 2 * 16 * 5 * 3 * 9


class TestPadKernel:
    def test_1x1_centre(self):
        out = pad_kernel_to_3x3(np.full((1, 1, 1, 1), 5.0))
        expected = np.zeros((1, 1, 3, 3))
        expected[0, 0, 1, 1] = 5.0
        np.testing.assert_array_equal(out, expected)

    def test_1x3_middle_row(self):
        out = pad_kernel_to_3x3(np.array([[[[1.0, 2.0, 3.0]]]]))
        np.testing.assert_array_equal(out[0, 0], [[0, 0, 0], [1, 2, 3], [0, 0, 0]])

    def test_3x1_middle_column(self):
        out = pad_kernel_to_3x3(np.array([1.0, 2.0, 3.0]).reshape(1, 1, 3, 1))
        np.testing.assert_array_equal(out[0, 0], [[0, 1, 0], [0, 2, 0], [0, 3, 0]])

    def test_3x3_unchanged(self, rng):
        k = rng.normal(size=(2, 3, 3, 3))
        np.testing.assert_array_equal(pad_kernel_to_3x3(k), k)

    def test_unsupported_extent(self):
        with pytest.raises(ValueError, match="unsupported"):
            pad_kernel_to_3x3(np.zeros((1, 1, 5, 5)))

    def test_3x1_conv_equivalence(self, rng):
        k = rng.normal(size=(1, 2, 3, 1))
        x = rng.normal(size=(1, 2, 7, 5))
        np.testing.assert_allclose(
            conv2d(x, pad_kernel_to_3x3(k), 1, 1), conv2d(x, k, 1, 0), atol=1e-12
        )

    @settings(max_examples=40, deadline=None)
    @given(
        shape=st.sampled_from([(1, 3), (3, 1), (1, 1)]),
        ci=st.integers(1, 8),
        co=st.integers(1, 8),
        h=st.integers(3, 16),
        w=st.integers(3, 16),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_conv_semantics_preserved(self, shape, ci, co, h, w, seed):
        rng = np.random.default_rng(seed)
        k = rng.normal(size=(co, ci) + shape)
        x = rng.normal(size=(1, ci, h, w))
        a = conv2d(x, k, (shape[0] - 1) // 2, (shape[1] - 1) // 2)
        np.testing.assert_allclose(conv2d(x, pad_kernel_to_3x3(k), 1, 1), a, atol=1e-12)


class TestIdentityKernel:
    def test_single_channel(self):
        k = identity_kernel(1)
        assert k.shape == (1, 1, 3, 3)
        assert k[0, 0, 1, 1] == 1 and k.sum() == 1

    def test_three_channels(self):
        k = identity_kernel(3)
        assert np.count_nonzero(k) == 3
        for c in range(3):
            assert k[c, c, 1, 1] == 1

    def test_conv_is_identity(self, rng):
        x = rng.normal(size=(2, 4, 5, 6))
        np.testing.assert_array_equal(conv2d(x, identity_kernel(4), 1, 1), x)


class TestScaling:
    def test_channel_scale_ones_and_zeros(self, rng):
        x = rng.normal(size=(2, 3, 4, 4))
        np.testing.assert_array_equal(channel_scale(x, np.ones(3)), x)
        assert not channel_scale(x, np.zeros(3)).any()

    def test_channel_scale_loop_oracle(self, rng):
        x = rng.normal(size=(1, 3, 2, 2))
        w = [1.0, 2.0, 0.5]
        expected = np.empty_like(x)
        for c in range(3):
            for i in range(2):
                for j in range(2):
                    expected[0, c, i, j] = w[c] * x[0, c, i, j]
        np.testing.assert_array_equal(channel_scale(x, w), expected)

    def test_channel_scale_per_sample(self, rng):
        x = rng.normal(size=(2, 3, 2, 2))
        w = rng.normal(size=(2, 3))
        out = channel_scale(x, w)
        for b in range(2):
            np.testing.assert_array_equal(out[b], channel_scale(x[b:b + 1], w[b])[0])

    def test_channel_scale_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            channel_scale(rng.normal(size=(1, 3, 2, 2)), np.ones(2))

    def test_kernel_scale(self, rng):
        k = rng.normal(size=(4, 2, 3, 3))
        np.testing.assert_array_equal(kernel_channel_scale(k, np.ones(4)), k)
        np.testing.assert_array_equal(kernel_channel_scale(k, np.full(4, 0.5)), k / 2)
        with pytest.raises(ValueError):
            kernel_channel_scale(k, np.ones(2))

    def test_scaling_commutes_with_conv(self, rng):
        x = rng.normal(size=(1, 3, 6, 6))
        k = rng.normal(size=(4, 3, 3, 3))
        w = rng.normal(size=4)
        np.testing.assert_allclose(
            conv2d(x, kernel_channel_scale(k, w), 1, 1),
            channel_scale(conv2d(x, k, 1, 1), w),
            atol=1e-12,
        )


class TestMatmul:
    def test_identity(self, rng):
        b = rng.normal(size=(2, 3))
        np.testing.assert_array_equal(matmul(np.eye(2), b), b)

    def test_hand_product(self):
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])

    def test_associative(self, rng):
        a, b, c = rng.normal(size=(3, 4, 4))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax_over_branches(np.zeros((5, 4))), 0.2, rtol=0, atol=1e-15)

    def test_closed_form(self):
        m = np.full((5, 1), -1000.0)
        m[:3, 0] = [math.log(1), math.log(2), math.log(3)]
        out = softmax_over_branches(m)[:, 0]
        np.testing.assert_allclose(out[:3], [1 / 6, 2 / 6, 3 / 6], atol=1e-15)
        assert out[3] < 1e-300

    def test_shift_invariance(self, rng):
        m = rng.normal(size=(5, 3))
        shifted = m.copy()
        shifted[:, 1] += 7
        np.testing.assert_allclose(softmax_over_branches(shifted), softmax_over_branches(m), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 9))
    def test_columns_are_distributions(self, seed, b, c):
        m = np.random.default_rng(seed).normal(scale=30, size=(b, c))
        out = softmax_over_branches(m)
        assert (out > 0).all()
        np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-12)


class TestFlatten:
    def test_row_by_row(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        np.testing.assert_array_equal(flatten_spatial(x), [[1], [2], [3], [4]])

    def test_single_pixel(self):
        assert flatten_spatial(np.ones((1, 2, 1, 1))).shape == (1, 2)

    def test_round_trip(self, rng):
        x = rng.normal(size=(1, 3, 4, 5))
        np.testing.assert_array_equal(unflatten_spatial(flatten_spatial(x), 4, 5), x)

    def test_batch_rejected(self):
        with pytest.raises(ValueError):
            flatten_spatial(np.ones((2, 1, 2, 2)))
