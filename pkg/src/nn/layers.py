"""
 Copyright Duel 2025

Hand-written forward/backward pairs. Every forward returns ``(output, cache)``; the matching
backward consumes the cache and returns the input gradient (plus parameter gradients where
the layer has parameters). Nothing here holds state, so layers are safe to share between threads.
"""
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.utilities.errors import DomainError


def he_uniform(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...], gain: float = 2.0,
               dtype=np.float32) -> np.ndarray:
    """
    Uniform fan-in initialisation with limit sqrt(3 * gain / fan_in); gain=2 is He, gain=1 LeCun.
    """
    limit = np.sqrt(3.0 * gain / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# Dense

def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """
    y = x W + b over the last axis.
    :param x: Input of shape (..., n_in).
    :param weight: Weight of shape (n_in, n_out).
    :param bias: Bias of shape (n_out,).
    :return: Output of shape (..., n_out) and the cache for dense_backward.
    """
    if x.shape[-1] != weight.shape[0]:
        raise DomainError(f"dense input has {x.shape[-1]} features, weight expects {weight.shape[0]}")
    return x @ weight + bias, (x, weight)


def dense_backward(grad: np.ndarray, cache):
    """
    :return: (grad wrt input, grad wrt weight, grad wrt bias)
    """
    x, weight = cache
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad.reshape(-1, grad.shape[-1])
    return grad @ weight.T, x2.T @ g2, g2.sum(axis=0)


# Activations

def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(grad: np.ndarray, cache: np.ndarray) -> np.ndarray:
    return grad * cache


def tanh_forward(x: np.ndarray):
    y = np.tanh(x)
    return y, y


def tanh_backward(grad: np.ndarray, cache: np.ndarray) -> np.ndarray:
    return grad * (1.0 - cache * cache)


# Dropout

def dropout_forward(x: np.ndarray, rate: float, training: bool, rng: Optional[np.random.Generator]):
    """
    Inverted dropout: zero a fraction ``rate`` of units and rescale survivors by 1 / (1 - rate).
    Identity when not training or when the rate is zero.
    """
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise DomainError("dropout in training mode needs a random generator")
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) * scale
    return x * mask, mask


def dropout_backward(grad: np.ndarray, cache: Optional[np.ndarray]) -> np.ndarray:
    return grad if cache is None else grad * cache


# Convolution (3x3, stride 1, zero "same" padding) and 2x2 max pooling

def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """
    Same-padded stride-1 convolution through an im2col view.
    :param x: Input of shape (n, c_in, h, w).
    :param weight: Kernel of shape (c_out, c_in, k, k) with odd k.
    :param bias: Bias of shape (c_out,).
    :return: Output of shape (n, c_out, h, w) and the cache for conv2d_backward.
    """
    n, c_in, h, w = x.shape
    c_out, c_w, k, _ = weight.shape
    if c_in != c_w:
        raise DomainError(f"conv input has {c_in} channels, kernel expects {c_w}")
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    # (n, c_in, h, w, k, k) -> (n*h*w, c_in*k*k)
    cols = sliding_window_view(xp, (k, k), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, -1)
    out = cols @ weight.reshape(c_out, -1).T + bias
    out = out.reshape(n, h, w, c_out).transpose(0, 3, 1, 2)
    return out, (x.shape, cols, weight)


def conv2d_backward(grad: np.ndarray, cache):
    """
    :return: (grad wrt input, grad wrt kernel, grad wrt bias)
    """
    x_shape, cols, weight = cache
    n, c_in, h, w = x_shape
    c_out, _, k, _ = weight.shape
    pad = k // 2
    g2 = grad.transpose(0, 2, 3, 1).reshape(-1, c_out)
    d_weight = (g2.T @ cols).reshape(weight.shape)
    d_bias = g2.sum(axis=0)
    d_cols = (g2 @ weight.reshape(c_out, -1)).reshape(n, h, w, c_in, k, k)
    d_xp = np.zeros((n, c_in, h + 2 * pad, w + 2 * pad), dtype=grad.dtype)
    for i in range(k):
        for j in range(k):
            d_xp[:, :, i:i + h, j:j + w] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return d_xp[:, :, pad:pad + h, pad:pad + w], d_weight, d_bias


def maxpool2_forward(x: np.ndarray):
    """
    Non-overlapping 2x2 max pooling; spatial extents must be even.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DomainError(f"max pooling needs even spatial extents, got {h}x{w}")
    windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg)


def maxpool2_backward(grad: np.ndarray, cache) -> np.ndarray:
    x_shape, arg = cache
    n, c, h, w = x_shape
    windows = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad.dtype)
    np.put_along_axis(windows, arg[..., None], grad[..., None], axis=-1)
    return windows.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)
