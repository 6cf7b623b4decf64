"""Layer math: hand-computed oracles plus finite-difference gradient checks.

Every forward op is pinned with a value small enough to verify on paper;
every backward op is checked coordinate-by-coordinate against a central
finite difference of its own forward pass.
"""

import numpy as np
import pytest

from enercast.errors import (
    ChannelMismatchError,
    DimMismatchError,
    LengthMismatchError,
    PoolLargerThanInputError,
)
from enercast.ops import (
    avgpool_backward,
    avgpool_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_same_backward,
    conv2d_same_forward,
    flatten_features,
    fully_connected_backward,
    fully_connected_forward,
    mse_loss,
    mse_loss_grad,
    relu_backward,
    relu_forward,
    same_pads,
    zerocenter_forward,
)
from enercast.tensor import Tensor4

from gradcheck import check_all_coords


def col(values):
    return Tensor4.from_vector(values)


# --- padding arithmetic ----------------------------------------------------


def test_same_pads_odd_and_even():
    assert same_pads(3) == (1, 1)
    assert same_pads(2) == (0, 1)
    assert same_pads(1) == (0, 0)
    assert same_pads(146) == (72, 73)


# --- convolution: hand oracles ----------------------------------------------


def test_conv_same_hand_oracle_odd_kernel():
    # [1,2,3] * [1,1,1], zero padded by one each side: [3, 6, 5]
    x = col([1.0, 2.0, 3.0])
    w = Tensor4(np.ones((3, 1, 1, 1)))
    y = conv2d_same_forward(x, w, np.zeros(1))
    assert y.shape == (3, 1, 1, 1)
    np.testing.assert_array_equal(y.data.ravel(), [3.0, 6.0, 5.0])


def test_conv_same_hand_oracle_even_kernel():
    # Even kernel pads only after: [1,2,3,0] windows of 2 -> [3, 5, 3]
    x = col([1.0, 2.0, 3.0])
    w = Tensor4(np.ones((2, 1, 1, 1)))
    y = conv2d_same_forward(x, w, np.zeros(1))
    np.testing.assert_array_equal(y.data.ravel(), [3.0, 5.0, 3.0])


def test_conv_stride_subsamples_ceil():
    # 1x1 kernel of weight 2, stride 2 over 4 rows -> rows 0 and 2, doubled.
    x = col([1.0, 2.0, 3.0, 4.0])
    w = Tensor4(np.full((1, 1, 1, 1), 2.0))
    y = conv2d_same_forward(x, w, np.zeros(1), stride=(2, 1))
    np.testing.assert_array_equal(y.data.ravel(), [2.0, 6.0])


def test_conv_bias_adds_per_filter():
    x = col([1.0, 1.0])
    w = Tensor4(np.ones((1, 1, 1, 2)))
    y = conv2d_same_forward(x, w, np.array([10.0, 20.0]))
    assert y.shape == (2, 1, 2, 1)
    np.testing.assert_array_equal(y.data[:, 0, 0, 0], [11.0, 11.0])
    np.testing.assert_array_equal(y.data[:, 0, 1, 0], [21.0, 21.0])


def test_conv_sums_over_input_channels():
    x = Tensor4(np.stack([np.full((2, 1), 1.0), np.full((2, 1), 3.0)],
                         axis=2).reshape(2, 1, 2, 1))
    w = Tensor4(np.ones((1, 1, 2, 1)))
    y = conv2d_same_forward(x, w, np.zeros(1))
    np.testing.assert_array_equal(y.data.ravel(), [4.0, 4.0])


def test_conv_kernel_longer_than_input_is_legal():
    # 'Same' padding adds kernel-1 zeros, so a height-48 input takes a 146 kernel.
    x = Tensor4(np.ones((4, 1, 1, 1)))
    w = Tensor4(np.ones((7, 1, 1, 1)))
    y = conv2d_same_forward(x, w, np.zeros(1))
    assert y.shape == (4, 1, 1, 1)
    # Window centered at row 0 covers rows -3..3 -> rows 0..3 present -> sum 4
    np.testing.assert_array_equal(y.data.ravel(), [4.0, 4.0, 4.0, 4.0])


def test_conv_rejects_channel_mismatch():
    x = Tensor4(np.ones((4, 1, 2, 1)))
    w = Tensor4(np.ones((3, 1, 1, 5)))
    with pytest.raises(ChannelMismatchError):
        conv2d_same_forward(x, w, np.zeros(5))


def test_conv_rejects_bad_bias_length():
    x = Tensor4(np.ones((4, 1, 1, 1)))
    w = Tensor4(np.ones((3, 1, 1, 5)))
    with pytest.raises(DimMismatchError):
        conv2d_same_forward(x, w, np.zeros(4))


def test_conv_rejects_zero_stride():
    x = Tensor4(np.ones((4, 1, 1, 1)))
    w = Tensor4(np.ones((3, 1, 1, 1)))
    with pytest.raises(ValueError):
        conv2d_same_forward(x, w, np.zeros(1), stride=(0, 1))


# --- convolution: finite-difference gradients --------------------------------


def test_conv_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    cases = [
        dict(h=6, w=1, c=1, n=2, kh=3, kw=1, f=2, stride=(1, 1)),
        dict(h=7, w=3, c=2, n=2, kh=4, kw=2, f=3, stride=(2, 1)),
        dict(h=5, w=4, c=1, n=1, kh=2, kw=3, f=2, stride=(2, 2)),
        dict(h=4, w=1, c=3, n=3, kh=7, kw=1, f=1, stride=(4, 1)),
    ]
    for case in cases:
        x = Tensor4(rng.normal(size=(case["h"], case["w"], case["c"], case["n"])))
        w = Tensor4(rng.normal(size=(case["kh"], case["kw"], case["c"], case["f"])))
        b = rng.normal(size=case["f"])
        r = rng.normal(size=(len(conv2d_same_forward(x, w, b, case["stride"]).data.ravel()),))

        def loss():
            y = conv2d_same_forward(x, w, b, case["stride"])
            return float(y.data.ravel() @ r)

        grad_out = Tensor4(r.reshape(conv2d_same_forward(x, w, b, case["stride"]).shape))
        gx, gw, gb = conv2d_same_backward(x, w, case["stride"], grad_out)

        assert check_all_coords(loss, x.data, gx.data) < 1e-6, case
        assert check_all_coords(loss, w.data, gw) < 1e-6, case
        assert check_all_coords(loss, b, gb) < 1e-6, case


# --- average pooling ---------------------------------------------------------


def test_avgpool_subsample_oracle():
    # pool 1, stride 4 over 8 rows -> rows 0 and 4.
    y = avgpool_forward(col([1.0, 2, 3, 4, 5, 6, 7, 8]), (1, 1), (4, 1))
    np.testing.assert_array_equal(y.data.ravel(), [1.0, 5.0])


def test_avgpool_mean_oracle():
    y = avgpool_forward(col([1.0, 2, 3, 4, 5, 6, 7, 8]), (4, 1), (4, 1))
    np.testing.assert_array_equal(y.data.ravel(), [2.5, 6.5])


def test_avgpool_overlapping_windows():
    y = avgpool_forward(col([1.0, 2, 3, 4, 5, 6, 7, 8]), (4, 1), (2, 1))
    np.testing.assert_array_equal(y.data.ravel(), [2.5, 4.5, 6.5])


def test_avgpool_drops_ragged_tail():
    # (5 - 2)//2 + 1 = 2 windows; row 4 is never read.
    y = avgpool_forward(col([1.0, 2, 3, 4, 100.0]), (2, 1), (2, 1))
    np.testing.assert_array_equal(y.data.ravel(), [1.5, 3.5])


def test_avgpool_rejects_pool_larger_than_input():
    with pytest.raises(PoolLargerThanInputError):
        avgpool_forward(col([1.0, 2, 3]), (4, 1), (1, 1))


def test_avgpool_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for pool, stride, shape in [((4, 1), (4, 1), (8, 1, 2, 2)),
                                ((4, 1), (2, 1), (9, 1, 1, 3)),
                                ((2, 2), (1, 2), (5, 4, 2, 1))]:
        x = Tensor4(rng.normal(size=shape))
        y0 = avgpool_forward(x, pool, stride)
        r = rng.normal(size=y0.data.shape)

        def loss():
            return float((avgpool_forward(x, pool, stride).data * r).sum())

        gx = avgpool_backward(x.shape, pool, stride, Tensor4(r))
        assert check_all_coords(loss, x.data, gx.data) < 1e-6


# --- batch normalisation ------------------------------------------------------


def test_batchnorm_training_oracle():
    # Batch {1, 3}: mean 2, biased var 1 -> outputs -/+ 1/sqrt(1+eps).
    x = col([1.0, 3.0])
    y, cache, new_mean, new_var = batchnorm_forward(
        x, np.ones(1), np.zeros(1), np.zeros(1), np.ones(1), training=True)
    expect = 1.0 / np.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(y.data.ravel(), [-expect, expect], rtol=1e-12)
    assert cache is not None
    np.testing.assert_allclose(new_mean, [0.2], rtol=1e-12)   # 0.9*0 + 0.1*2
    np.testing.assert_allclose(new_var, [1.0], rtol=1e-12)    # 0.9*1 + 0.1*1


def test_batchnorm_scale_and_offset():
    x = col([1.0, 3.0])
    y, _, _, _ = batchnorm_forward(
        x, np.array([2.0]), np.array([10.0]), np.zeros(1), np.ones(1), training=True)
    expect = 2.0 / np.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(y.data.ravel(), [10.0 - expect, 10.0 + expect],
                               rtol=1e-12)


def test_batchnorm_inference_uses_running_stats():
    x = col([1.0, 3.0])
    y, cache, rm, rv = batchnorm_forward(
        x, np.ones(1), np.zeros(1), np.array([1.0]), np.array([4.0]), training=False)
    assert cache is None
    np.testing.assert_allclose(y.data.ravel(),
                               [0.0, 2.0 / np.sqrt(4.0 + 1e-5)], rtol=1e-12)
    # Inference never moves the running stats.
    np.testing.assert_array_equal(rm, [1.0])
    np.testing.assert_array_equal(rv, [4.0])


def test_batchnorm_rejects_bad_param_length():
    x = Tensor4(np.ones((2, 1, 3, 2)))
    with pytest.raises(DimMismatchError):
        batchnorm_forward(x, np.ones(2), np.zeros(3), np.zeros(3), np.ones(3),
                          training=True)


def test_batchnorm_gradients_match_finite_differences():
    rng = np.random.default_rng(13)
    for shape in [(4, 1, 2, 3), (3, 2, 1, 5), (6, 1, 4, 2)]:
        c = shape[2]
        x = Tensor4(rng.normal(size=shape))
        gamma = rng.normal(size=c)
        beta = rng.normal(size=c)
        r = rng.normal(size=shape)

        def loss():
            y, _, _, _ = batchnorm_forward(x, gamma, beta, np.zeros(c), np.ones(c),
                                           training=True)
            return float((y.data * r).sum())

        _, cache, _, _ = batchnorm_forward(x, gamma, beta, np.zeros(c), np.ones(c),
                                           training=True)
        gx, ggamma, gbeta = batchnorm_backward(cache, Tensor4(r))
        assert check_all_coords(loss, x.data, gx.data) < 1e-6
        assert check_all_coords(loss, gamma, ggamma) < 1e-6
        assert check_all_coords(loss, beta, gbeta) < 1e-6


# --- relu / zerocenter --------------------------------------------------------


def test_relu_oracle():
    y = relu_forward(col([-2.0, 0.0, 3.0]))
    np.testing.assert_array_equal(y.data.ravel(), [0.0, 0.0, 3.0])


def test_relu_backward_masks_nonpositive():
    x = col([-2.0, 0.0, 3.0])
    g = relu_backward(x, col([5.0, 5.0, 5.0]))
    np.testing.assert_array_equal(g.data.ravel(), [0.0, 0.0, 5.0])


def test_zerocenter_subtracts_fixed_mean():
    x = Tensor4(np.ones((2, 1, 1, 3)))
    mean = np.full((2, 1, 1, 1), 0.25)
    y = zerocenter_forward(x, mean)
    np.testing.assert_array_equal(y.data, np.full((2, 1, 1, 3), 0.75))


# --- fully connected -----------------------------------------------------------


def test_flatten_is_height_then_width_then_channel():
    data = np.zeros((2, 1, 2, 1))
    data[0, 0, 0, 0] = 1.0
    data[0, 0, 1, 0] = 2.0
    data[1, 0, 0, 0] = 3.0
    data[1, 0, 1, 0] = 4.0
    np.testing.assert_array_equal(flatten_features(Tensor4(data)),
                                  [[1.0, 2.0, 3.0, 4.0]])


def test_fully_connected_hand_oracle():
    x = col([1.0, 2.0])
    w = Tensor4(np.array([3.0, 4.0]).reshape(1, 2, 1, 1))
    y = fully_connected_forward(x, w, np.array([1.0]))
    assert y.shape == (1, 1, 1, 1)
    assert y.data.ravel()[0] == 12.0   # 1*3 + 2*4 + 1


def test_fully_connected_backward_hand_oracle():
    x = col([1.0, 2.0])
    w = Tensor4(np.array([3.0, 4.0]).reshape(1, 2, 1, 1))
    gx, gw, gb = fully_connected_backward(x, w, Tensor4(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(gx.data.ravel(), [3.0, 4.0])
    np.testing.assert_array_equal(gw.ravel(), [1.0, 2.0])
    np.testing.assert_array_equal(gb, [1.0])


def test_fully_connected_rejects_feature_mismatch():
    x = col([1.0, 2.0, 3.0])
    w = Tensor4(np.ones((1, 2, 1, 1)))
    with pytest.raises(DimMismatchError):
        fully_connected_forward(x, w, np.zeros(1))


def test_fully_connected_gradients_match_finite_differences():
    rng = np.random.default_rng(17)
    for shape, units in [((3, 1, 2, 4), 3), ((48, 1, 1, 2), 1), ((4, 3, 2, 1), 5)]:
        flat = shape[0] * shape[1] * shape[2]
        x = Tensor4(rng.normal(size=shape))
        w = Tensor4(rng.normal(size=(1, flat, 1, units)))
        b = rng.normal(size=units)
        r = rng.normal(size=(1, 1, units, shape[3]))

        def loss():
            return float((fully_connected_forward(x, w, b).data * r).sum())

        gx, gw, gb = fully_connected_backward(x, w, Tensor4(r))
        assert check_all_coords(loss, x.data, gx.data) < 1e-6
        assert check_all_coords(loss, w.data, gw) < 1e-6
        assert check_all_coords(loss, b, gb) < 1e-6


# --- loss ----------------------------------------------------------------------


def test_mse_oracle():
    assert mse_loss([1.0, 2.0], [3.0, 2.0]) == 2.0


def test_mse_grad_oracle():
    np.testing.assert_array_equal(mse_loss_grad([1.0, 2.0], [3.0, 2.0]), [-2.0, 0.0])


def test_mse_rejects_length_mismatch():
    with pytest.raises(LengthMismatchError):
        mse_loss([1.0], [1.0, 2.0])
    with pytest.raises(LengthMismatchError):
        mse_loss_grad([1.0], [1.0, 2.0])


def test_mse_grad_matches_finite_differences():
    rng = np.random.default_rng(19)
    p = rng.normal(size=12)
    t = rng.normal(size=12)

    def loss():
        return mse_loss(p, t)

    assert check_all_coords(loss, p, mse_loss_grad(p, t)) < 1e-6
