"""Dense float64 primitives with hand-written backward passes.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 laid out
channel-first (C, H, W). Every primitive checks its output for NaN/Inf and
raises :class:`NonFiniteError` instead of letting it propagate.
"""

from __future__ import annotations

import numpy as np

NORM_EPS = 1e-5


class NonFiniteError(FloatingPointError):
    """Raised when a primitive produces NaN or Inf."""


def as_tensor(x, shape=None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)}, got {arr.shape}")
    return check_finite(arr, "input")


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(x).all():
        raise NonFiniteError(f"non-finite values produced by {where}")
    return x


def conv_transpose2d_shape(h: int, w: int, kernel: int, stride: int, pad: int) -> tuple[int, int]:
    return stride * (h - 1) + kernel - 2 * pad, stride * (w - 1) + kernel - 2 * pad


def _check_conv_args(x: np.ndarray, kernels: np.ndarray, stride: int, pad: int) -> None:
    if x.ndim != 3:
        raise ValueError(f"input must be (C_in, H, W), got ndim={x.ndim}")
    if kernels.ndim != 4:
        raise ValueError(f"kernels must be (C_in, C_out, K, K), got ndim={kernels.ndim}")
    if kernels.shape[0] != x.shape[0]:
        raise ValueError(
            f"C_in mismatch: input has {x.shape[0]} channels, kernels expect {kernels.shape[0]}"
        )
    if kernels.shape[2] != kernels.shape[3]:
        raise ValueError(f"kernels must be square, got K={kernels.shape[2]}x{kernels.shape[3]}")
    if kernels.shape[2] < 1:
        raise ValueError("kernel size K must be >= 1")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    h_out, w_out = conv_transpose2d_shape(x.shape[1], x.shape[2], kernels.shape[2], stride, pad)
    if h_out < 1 or w_out < 1:
        raise ValueError(f"pad={pad} too large: output would be {h_out}x{w_out}")


def conv_transpose2d(x: np.ndarray, kernels: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Fractionally-strided convolution of ``x`` (C_in,H,W) with ``kernels`` (C_in,C_out,K,K).

    Each input pixel scatters ``x[i,h,w] * kernels[i,:,:,:]`` into the output
    at offset (stride*h, stride*w); ``pad`` rows/cols are then cropped from
    every border.
    """
    _check_conv_args(x, kernels, stride, pad)
    c_in, h, w = x.shape
    k = kernels.shape[2]
    c_out = kernels.shape[1]
    # (C_out, K, K, H, W): one product per (kernel tap, input pixel)
    cols = np.tensordot(kernels, x, axes=(0, 0))
    full = np.zeros((c_out, stride * (h - 1) + k, stride * (w - 1) + k))
    for a in range(k):
        for b in range(k):
            full[:, a : a + stride * h : stride, b : b + stride * w : stride] += cols[:, a, b]
    out = full[:, pad : full.shape[1] - pad, pad : full.shape[2] - pad]
    return check_finite(np.ascontiguousarray(out), "conv_transpose2d")


def conv_transpose2d_backward(
    x: np.ndarray, kernels: np.ndarray, grad_out: np.ndarray, stride: int = 1, pad: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(grad_input, grad_kernels)`` for :func:`conv_transpose2d`."""
    _check_conv_args(x, kernels, stride, pad)
    c_in, h, w = x.shape
    k = kernels.shape[2]
    c_out = kernels.shape[1]
    expected = (c_out, *conv_transpose2d_shape(h, w, k, stride, pad))
    if grad_out.shape != expected:
        raise ValueError(f"grad_out shape {grad_out.shape} != forward output shape {expected}")
    full = np.zeros((c_out, stride * (h - 1) + k, stride * (w - 1) + k))
    full[:, pad : full.shape[1] - pad, pad : full.shape[2] - pad] = grad_out
    gathered = np.empty((c_out, k, k, h, w))
    for a in range(k):
        for b in range(k):
            gathered[:, a, b] = full[:, a : a + stride * h : stride, b : b + stride * w : stride]
    grad_x = np.tensordot(kernels, gathered, axes=([1, 2, 3], [0, 1, 2]))
    grad_k = np.tensordot(x, gathered, axes=([1, 2], [3, 4]))
    return (
        check_finite(grad_x, "conv_transpose2d_backward"),
        check_finite(grad_k, "conv_transpose2d_backward"),
    )


def activation(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        out = np.maximum(x, 0.0)
    elif kind == "tanh":
        out = np.tanh(x)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return check_finite(out, kind)


def activation_backward(x: np.ndarray, grad_out: np.ndarray, kind: str) -> np.ndarray:
    """Gradient w.r.t. the pre-activation ``x``.

    The ReLU derivative is taken as 1 at exactly zero.
    """
    if x.shape != grad_out.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs grad {grad_out.shape}")
    if kind == "relu":
        out = grad_out * (x >= 0.0)
    elif kind == "tanh":
        out = grad_out * (1.0 - np.tanh(x) ** 2)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return check_finite(out, f"{kind}_backward")


def channel_norm(
    x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = NORM_EPS
) -> np.ndarray:
    """Standardize each channel over its spatial extent, then apply ``gain``/``bias``."""
    out, _ = channel_norm_with_cache(x, gain, bias, eps)
    return out


def channel_norm_with_cache(x, gain, bias, eps: float = NORM_EPS):
    if x.ndim != 3:
        raise ValueError(f"channel_norm expects (C, H, W), got ndim={x.ndim}")
    c = x.shape[0]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ValueError(f"gain/bias must have shape ({c},), got {gain.shape} and {bias.shape}")
    mean = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    out = gain[:, None, None] * xhat + bias[:, None, None]
    return check_finite(out, "channel_norm"), (xhat, inv_std)


def channel_norm_backward(
    x: np.ndarray, gain: np.ndarray, bias: np.ndarray, grad_out: np.ndarray,
    eps: float = NORM_EPS, cache=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(grad_x, grad_gain, grad_bias)``."""
    if grad_out.shape != x.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} != input shape {x.shape}")
    if cache is None:
        _, cache = channel_norm_with_cache(x, gain, bias, eps)
    xhat, inv_std = cache
    n = x.shape[1] * x.shape[2]
    grad_gain = (grad_out * xhat).sum(axis=(1, 2))
    grad_bias = grad_out.sum(axis=(1, 2))
    dxhat = grad_out * gain[:, None, None]
    grad_x = (inv_std / n) * (
        n * dxhat
        - dxhat.sum(axis=(1, 2), keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=(1, 2), keepdims=True)
    )
    return check_finite(grad_x, "channel_norm_backward"), grad_gain, grad_bias
