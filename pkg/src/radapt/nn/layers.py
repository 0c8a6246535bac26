"""Array-level layer primitives with hand-derived backward passes.

Each forward returns its output plus the cache needed by the matching
backward. Activations are (B, C, H, W); the dtype is whatever the caller
supplies (float32 in normal runs, float64 when checking gradients).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from radapt.errors import ShapeError


# ------------------------------------------------------------------ conv 3x3


def _im2col3(xp: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Unfold 3x3 patches of a padded input into (B, C*9, out_h*out_w)."""
    b, c = xp.shape[:2]
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, oh, ow, 3, 3)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * 9, out_h * out_w)
    return np.ascontiguousarray(cols)


def conv3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Same-padded 3x3 convolution, stride 1.

    weight is (C_out, C_in, 3, 3); output keeps the spatial size.
    """
    b, c, h, w = x.shape
    c_out = weight.shape[0]
    if weight.shape[1] != c:
        raise ShapeError(f"conv expects {weight.shape[1]} input channels, got {c}")
    xp = np.zeros((b, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1 : h + 1, 1 : w + 1] = x
    cols = _im2col3(xp, h, w)
    w2 = weight.reshape(c_out, c * 9)
    y = np.matmul(w2, cols) + bias[:, None]
    cache = (cols, weight, (b, c, h, w))
    return y.reshape(b, c_out, h, w), cache


def conv3x3_backward(grad_y: np.ndarray, cache):
    cols, weight, (b, c, h, w) = cache
    c_out = weight.shape[0]
    gy = grad_y.reshape(b, c_out, h * w)
    grad_b = gy.sum(axis=(0, 2))
    grad_w = np.einsum("bop,bkp->ok", gy, cols).reshape(weight.shape)
    dcols = np.matmul(weight.reshape(c_out, c * 9).T, gy)  # (B, C*9, H*W)
    d6 = dcols.reshape(b, c, 3, 3, h, w)
    dxp = np.zeros((b, c, h + 2, w + 2), dtype=grad_y.dtype)
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + h, dj : dj + w] += d6[:, :, di, dj]
    return dxp[:, :, 1 : h + 1, 1 : w + 1], grad_w, grad_b


# -------------------------------------------------------------------- relu


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), (x > 0)


def relu_backward(grad_y: np.ndarray, cache):
    return grad_y * cache


# ------------------------------------------------------------- average pools


def avgpool2_forward(x: np.ndarray):
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"2x2 average pool needs even spatial dims, got {h}x{w}")
    y = x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return y, (h, w)


def avgpool2_backward(grad_y: np.ndarray, cache):
    h, w = cache
    g = grad_y / 4.0
    return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3).astype(grad_y.dtype, copy=False)


def global_avgpool_forward(x: np.ndarray):
    b, c, h, w = x.shape
    return x.mean(axis=(2, 3)), (h, w)


def global_avgpool_backward(grad_y: np.ndarray, cache):
    h, w = cache
    g = grad_y[:, :, None, None] / (h * w)
    return np.broadcast_to(g, (*grad_y.shape, h, w)).copy()


# ------------------------------------------------------------------- linear


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """x is (B, F_in); weight is (F_out, F_in).

    Computed as an explicit multiply-sum, not a GEMM: BLAS picks a
    different accumulation order for (1, F) and (B, F) left operands, and
    inference must give bit-identical rows at any batch size.
    """
    y = np.sum(x[:, None, :] * weight[None, :, :], axis=-1) + bias
    return y, x


def linear_backward(grad_y: np.ndarray, cache, weight: np.ndarray):
    x = cache
    grad_w = grad_y.T @ x
    grad_b = grad_y.sum(axis=0)
    grad_x = grad_y @ weight
    return grad_x, grad_w, grad_b


# ------------------------------------------------- batch normalisation (2d)


def batchnorm_train_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    """Whiten with the live batch statistics (biased variance over B*H*W)."""
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))  # biased: divides by B*H*W
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv_std)
    return y, mean, var, cache


def batchnorm_train_backward(grad_y: np.ndarray, cache, gamma: np.ndarray):
    """Gradient flows through the batch statistics as well as the affine."""
    xhat, inv_std = cache
    b, c, h, w = grad_y.shape
    n = b * h * w
    grad_gamma = (grad_y * xhat).sum(axis=(0, 2, 3))
    grad_beta = grad_y.sum(axis=(0, 2, 3))
    dxhat = grad_y * gamma[None, :, None, None]
    s1 = dxhat.sum(axis=(0, 2, 3))
    s2 = (dxhat * xhat).sum(axis=(0, 2, 3))
    grad_x = (
        inv_std[None, :, None, None]
        / n
        * (n * dxhat - s1[None, :, None, None] - xhat * s2[None, :, None, None])
    )
    return grad_x.astype(grad_y.dtype, copy=False), grad_gamma, grad_beta


def batchnorm_eval_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    eps: float,
):
    """Whiten with stored statistics; pure function of its inputs."""
    inv_std = 1.0 / np.sqrt(running_var + eps)
    xhat = (x - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
    return gamma[None, :, None, None] * xhat + beta[None, :, None, None]


# ------------------------------------------------------------------ softmax


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax in float64 with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-probabilities in float64, safe for extreme logits."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
