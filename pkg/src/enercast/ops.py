"""Forward and backward math for every layer kind.

All functions here are pure: they take arrays in, return arrays out, and
never touch shared state. Layer objects in `network.py` own parameters and
call down into these. Gradient conventions follow the chain rule exactly as
verified by the finite-difference tests; no gradient is approximated.

Convolution is cross-correlation (no kernel flip). 'Same' padding always
adds kernel−1 zeros per axis, split leading = (k−1)//2, trailing = the rest,
so the output spatial size is ceil(input/stride) for any stride, and a
kernel longer than its input is legal.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import (
    ChannelMismatchError,
    DimMismatchError,
    LengthMismatchError,
    PoolLargerThanInputError,
)
from .tensor import Tensor4


def same_pads(kernel: int) -> tuple[int, int]:
    """Leading/trailing zero pad for 'same' output: total kernel−1, floor-split."""
    lead = (kernel - 1) // 2
    return lead, kernel - 1 - lead


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _check_stride(stride: tuple[int, int]) -> tuple[int, int]:
    sh, sw = int(stride[0]), int(stride[1])
    if sh < 1 or sw < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return sh, sw


def _window_view(x: np.ndarray, kh: int, kw: int, sh: int, sw: int,
                 out_h: int, out_w: int) -> np.ndarray:
    """Strided read-only view (out_h, out_w, kh, kw, C, N) over x (H, W, C, N)."""
    s0, s1, s2, s3 = x.strides
    return as_strided(
        x,
        shape=(out_h, out_w, kh, kw, x.shape[2], x.shape[3]),
        strides=(s0 * sh, s1 * sw, s0, s1, s2, s3),
        writeable=False,
    )


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int,
            out_h: int, out_w: int) -> np.ndarray:
    """Patch matrix (N, out_h*out_w, kh*kw*C) from a padded (H, W, C, N) array.

    Patch element order is (kernel row, kernel col, channel), matching the
    C-order flattening of a (kh, kw, C, F) weight tensor.
    """
    view = _window_view(xp, kh, kw, sh, sw, out_h, out_w)
    n = xp.shape[3]
    cols = view.transpose(5, 0, 1, 2, 3, 4).reshape(n, out_h * out_w, kh * kw * xp.shape[2])
    return cols


# --- convolution ---------------------------------------------------------


def conv2d_same_forward(x: Tensor4, weights: Tensor4, bias: np.ndarray,
                        stride: tuple[int, int] = (1, 1)) -> Tensor4:
    """Cross-correlate x with a (kh, kw, in_c, filters) kernel, 'same' padded.

    Output shape: (ceil(H/sh), ceil(W/sw), filters, N).
    """
    kh, kw, in_c, filters = weights.shape
    if in_c != x.channels:
        raise ChannelMismatchError(
            f"kernel expects {in_c} input channels, tensor has {x.channels}"
        )
    b = np.asarray(bias, dtype=np.float64).reshape(-1)
    if b.shape[0] != filters:
        raise DimMismatchError(f"bias length {b.shape[0]} != filter count {filters}")
    sh, sw = _check_stride(stride)

    h, w, _, n = x.shape
    pt, pb = same_pads(kh)
    pl, pr = same_pads(kw)
    xp = np.pad(x.data, ((pt, pb), (pl, pr), (0, 0), (0, 0)))
    out_h, out_w = ceil_div(h, sh), ceil_div(w, sw)

    cols = _im2col(xp, kh, kw, sh, sw, out_h, out_w)          # (N, P, K)
    wmat = weights.data.reshape(kh * kw * in_c, filters)       # (K, F)
    y = cols @ wmat + b                                        # (N, P, F)
    return Tensor4(y.reshape(n, out_h, out_w, filters).transpose(1, 2, 3, 0))


def conv2d_same_backward(x: Tensor4, weights: Tensor4, stride: tuple[int, int],
                         grad_out: Tensor4) -> tuple[Tensor4, np.ndarray, np.ndarray]:
    """Gradients of a conv2d_same_forward call: (d_input, d_weights, d_bias).

    Recomputes the patch matrix rather than caching it; for the kernel sizes
    used here the patch extraction is cheap next to the matmuls and caching
    it would hold hundreds of MB per wide layer.
    """
    kh, kw, in_c, filters = weights.shape
    sh, sw = _check_stride(stride)
    h, w, _, n = x.shape
    pt, pb = same_pads(kh)
    pl, pr = same_pads(kw)
    xp = np.pad(x.data, ((pt, pb), (pl, pr), (0, 0), (0, 0)))
    out_h, out_w = ceil_div(h, sh), ceil_div(w, sw)

    gy = grad_out.data.transpose(3, 0, 1, 2).reshape(n, out_h * out_w, filters)

    grad_bias = gy.sum(axis=(0, 1))

    cols = _im2col(xp, kh, kw, sh, sw, out_h, out_w)           # (N, P, K)
    k = kh * kw * in_c
    grad_wmat = cols.reshape(-1, k).T @ gy.reshape(-1, filters)
    grad_weights = grad_wmat.reshape(kh, kw, in_c, filters)

    wmat = weights.data.reshape(k, filters)
    grad_cols = gy @ wmat.T                                    # (N, P, K)
    g6 = grad_cols.reshape(n, out_h, out_w, kh, kw, in_c).transpose(3, 4, 1, 2, 5, 0)

    grad_xp = np.zeros_like(xp)
    for i in range(kh):
        row = g6[i]
        for j in range(kw):
            grad_xp[i:i + sh * out_h:sh, j:j + sw * out_w:sw] += row[j]
    grad_x = grad_xp[pt:pt + h, pl:pl + w]
    return Tensor4(grad_x), grad_weights, grad_bias


# --- average pooling -----------------------------------------------------


def avgpool_forward(x: Tensor4, pool: tuple[int, int],
                    stride: tuple[int, int]) -> Tensor4:
    """Mean over pool windows, no padding: out = (L − pool)//stride + 1.

    A 1x1 pool with stride s is a pure subsample at positions 0, s, 2s, ...
    """
    ph, pw = int(pool[0]), int(pool[1])
    sh, sw = _check_stride(stride)
    h, w, c, n = x.shape
    if ph > h or pw > w:
        raise PoolLargerThanInputError(
            f"pool {ph}x{pw} exceeds input extent {h}x{w}"
        )
    out_h = (h - ph) // sh + 1
    out_w = (w - pw) // sw + 1
    view = _window_view(x.data, ph, pw, sh, sw, out_h, out_w)
    return Tensor4(view.mean(axis=(2, 3)))


def avgpool_backward(x_shape: tuple[int, int, int, int], pool: tuple[int, int],
                     stride: tuple[int, int], grad_out: Tensor4) -> Tensor4:
    """Spread each output gradient uniformly over its pool window."""
    ph, pw = int(pool[0]), int(pool[1])
    sh, sw = _check_stride(stride)
    out_h, out_w = grad_out.shape[0], grad_out.shape[1]
    share = grad_out.data / (ph * pw)
    grad_x = np.zeros(x_shape)
    for i in range(ph):
        for j in range(pw):
            grad_x[i:i + sh * out_h:sh, j:j + sw * out_w:sw] += share
    return Tensor4(grad_x)


# --- batch normalisation -------------------------------------------------


def batchnorm_forward(x: Tensor4, gamma: np.ndarray, beta: np.ndarray,
                      running_mean: np.ndarray, running_var: np.ndarray,
                      training: bool, momentum: float = 0.1, eps: float = 1e-5):
    """Per-channel normalisation over the (height, width, batch) axes.

    Training mode normalises by batch statistics (biased variance) and
    returns running stats updated as (1−momentum)*old + momentum*batch.
    Inference mode normalises by the running stats unchanged.

    Returns (y, cache, new_running_mean, new_running_var); cache is None in
    inference mode.
    """
    c = x.channels
    gamma = np.asarray(gamma, dtype=np.float64).reshape(-1)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if gamma.shape[0] != c or beta.shape[0] != c:
        raise DimMismatchError(
            f"scale/offset lengths {gamma.shape[0]}/{beta.shape[0]} != channels {c}"
        )
    cshape = (1, 1, c, 1)
    if training:
        mu = x.data.mean(axis=(0, 1, 3))
        var = x.data.var(axis=(0, 1, 3))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu.reshape(cshape)) * inv_std.reshape(cshape)
        y = gamma.reshape(cshape) * xhat + beta.reshape(cshape)
        new_mean = (1.0 - momentum) * running_mean + momentum * mu
        new_var = (1.0 - momentum) * running_var + momentum * var
        m = x.height * x.width * x.batch
        cache = (xhat, inv_std, gamma, m)
        return Tensor4(y), cache, new_mean, new_var
    inv_std = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean.reshape(cshape)) * inv_std.reshape(cshape)
    y = gamma.reshape(cshape) * xhat + beta.reshape(cshape)
    return Tensor4(y), None, running_mean, running_var


def batchnorm_backward(cache, grad_out: Tensor4):
    """Training-mode gradients through the batch statistics.

    Returns (d_input, d_gamma, d_beta).
    """
    xhat, inv_std, gamma, m = cache
    gy = grad_out.data
    grad_beta = gy.sum(axis=(0, 1, 3))
    grad_gamma = (gy * xhat).sum(axis=(0, 1, 3))
    c = gamma.shape[0]
    cshape = (1, 1, c, 1)
    gx = (gamma * inv_std).reshape(cshape) * (
        gy
        - grad_beta.reshape(cshape) / m
        - xhat * grad_gamma.reshape(cshape) / m
    )
    return Tensor4(gx), grad_gamma, grad_beta


# --- pointwise -----------------------------------------------------------


def relu_forward(x: Tensor4) -> Tensor4:
    return Tensor4(np.maximum(x.data, 0.0))


def relu_backward(x: Tensor4, grad_out: Tensor4) -> Tensor4:
    return Tensor4(grad_out.data * (x.data > 0.0))


def zerocenter_forward(x: Tensor4, mean: np.ndarray) -> Tensor4:
    """Subtract a fixed (H, W, C, 1) mean captured from training data."""
    return Tensor4(x.data - mean)


# --- fully connected -----------------------------------------------------


def flatten_features(x: Tensor4) -> np.ndarray:
    """(H, W, C, N) -> (N, H*W*C), height-major then width then channel."""
    return x.data.transpose(3, 0, 1, 2).reshape(x.batch, -1)


def fully_connected_forward(x: Tensor4, weights: Tensor4, bias: np.ndarray) -> Tensor4:
    """Dense map over flattened features; output lands on the channel axis.

    Weights are (1, flat_in, 1, units); output is (1, 1, units, N).
    """
    _, flat_in, _, units = weights.shape
    feats = flatten_features(x)
    if feats.shape[1] != flat_in:
        raise DimMismatchError(
            f"flattened input has {feats.shape[1]} features, weights expect {flat_in}"
        )
    b = np.asarray(bias, dtype=np.float64).reshape(-1)
    if b.shape[0] != units:
        raise DimMismatchError(f"bias length {b.shape[0]} != unit count {units}")
    y = feats @ weights.data.reshape(flat_in, units) + b       # (N, U)
    return Tensor4(y.T.reshape(1, 1, units, -1))


def fully_connected_backward(x: Tensor4, weights: Tensor4,
                             grad_out: Tensor4) -> tuple[Tensor4, np.ndarray, np.ndarray]:
    """Gradients of the dense map: (d_input, d_weights, d_bias)."""
    _, flat_in, _, units = weights.shape
    gy = grad_out.data.reshape(units, -1).T                    # (N, U)
    feats = flatten_features(x)
    grad_bias = gy.sum(axis=0)
    grad_wmat = feats.T @ gy                                   # (D, U)
    grad_weights = grad_wmat.reshape(1, flat_in, 1, units)
    grad_feats = gy @ weights.data.reshape(flat_in, units).T   # (N, D)
    h, w, c, n = x.shape
    grad_x = grad_feats.reshape(n, h, w, c).transpose(1, 2, 3, 0)
    return Tensor4(grad_x), grad_weights, grad_bias


# --- loss ----------------------------------------------------------------


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean of squared differences between two equal-length vectors."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape[0] != t.shape[0]:
        raise LengthMismatchError(f"pred length {p.shape[0]} != target length {t.shape[0]}")
    d = p - t
    return float(d @ d / d.shape[0])


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(mse)/d(pred) = 2*(pred − target)/len, elementwise."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape[0] != t.shape[0]:
        raise LengthMismatchError(f"pred length {p.shape[0]} != target length {t.shape[0]}")
    return 2.0 * (p - t) / p.shape[0]
