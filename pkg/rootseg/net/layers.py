"""
Layer primitives for the U-Net, forward and backward, on NCHW arrays.

Each `*_forward` returns `(out, cache)`; the matching `*_backward` takes the
upstream gradient and that cache and returns input (and parameter)
gradients.
"""

from __future__ import annotations

from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

GN_EPS = 1e-5


# ---------------------------------------------------------------------------
# Valid 3x3 convolution
# ---------------------------------------------------------------------------
def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, Any]:
    """x (N, C, H, W), w (K, C, 3, 3) -> (N, K, H-2, W-2)."""
    windows = sliding_window_view(x, (3, 3), axis=(2, 3))
    out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, H', W', K)
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out), (x, w)


def conv3x3_backward(dout: np.ndarray, cache: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    windows = sliding_window_view(x, (3, 3), axis=(2, 3))
    db = dout.sum(axis=(0, 2, 3))
    dw = np.tensordot(dout, windows, axes=([0, 2, 3], [0, 2, 3]))  # (K, C, 3, 3)
    padded = np.pad(dout, ((0, 0), (0, 0), (2, 2), (2, 2)))
    dwin = sliding_window_view(padded, (3, 3), axis=(2, 3))
    flipped = w[:, :, ::-1, ::-1]
    dx = np.tensordot(dwin, flipped, axes=([1, 4, 5], [0, 2, 3]))  # (N, H, W, C)
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2)), dw, db


# ---------------------------------------------------------------------------
# 1x1 convolution (output head)
# ---------------------------------------------------------------------------
def conv1x1_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, Any]:
    """x (N, C, H, W), w (K, C, 1, 1)."""
    out = np.einsum("nchw,kc->nkhw", x, w[:, :, 0, 0]) + b[None, :, None, None]
    return out, (x, w)


def conv1x1_backward(dout: np.ndarray, cache: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    db = dout.sum(axis=(0, 2, 3))
    dw = np.einsum("nkhw,nchw->kc", dout, x)[:, :, None, None]
    dx = np.einsum("nkhw,kc->nchw", dout, w[:, :, 0, 0])
    return dx, dw, db


# ---------------------------------------------------------------------------
# ReLU
# ---------------------------------------------------------------------------
def relu_forward(x: np.ndarray) -> tuple[np.ndarray, Any]:
    return np.maximum(x, 0), x > 0


def relu_backward(dout: np.ndarray, cache: Any) -> np.ndarray:
    return dout * cache


# ---------------------------------------------------------------------------
# Group normalization
# ---------------------------------------------------------------------------
def group_norm(
    x: np.ndarray,
    groups: int,
    scale: np.ndarray,
    shift: np.ndarray,
    eps: float = GN_EPS,
) -> np.ndarray:
    return group_norm_forward(x, groups, scale, shift, eps)[0]


def group_norm_forward(
    x: np.ndarray,
    groups: int,
    scale: np.ndarray,
    shift: np.ndarray,
    eps: float = GN_EPS,
) -> tuple[np.ndarray, Any]:
    n, c, h, w = x.shape
    if groups <= 0 or c % groups:
        raise ValueError(f"{c} channels cannot be split into {groups} groups")
    xg = x.reshape(n, groups, c // groups, h, w)
    mean = xg.mean(axis=(2, 3, 4), keepdims=True)
    var = xg.var(axis=(2, 3, 4), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mean) * inv_std).reshape(n, c, h, w)
    out = xhat * scale[None, :, None, None] + shift[None, :, None, None]
    return out, (xhat, inv_std, groups, scale)


def group_norm_backward(dout: np.ndarray, cache: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, groups, scale = cache
    n, c, h, w = dout.shape
    dscale = (dout * xhat).sum(axis=(0, 2, 3))
    dshift = dout.sum(axis=(0, 2, 3))
    dxhat = (dout * scale[None, :, None, None]).reshape(n, groups, c // groups, h, w)
    xg = xhat.reshape(n, groups, c // groups, h, w)
    m = (c // groups) * h * w
    sum_d = dxhat.sum(axis=(2, 3, 4), keepdims=True)
    sum_dx = (dxhat * xg).sum(axis=(2, 3, 4), keepdims=True)
    dx = inv_std / m * (m * dxhat - sum_d - xg * sum_dx)
    return dx.reshape(n, c, h, w), dscale, dshift


# ---------------------------------------------------------------------------
# 2x2 max pooling
# ---------------------------------------------------------------------------
def maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, Any]:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max-pool needs even spatial size, got {h}x{w}")
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool_backward(dout: np.ndarray, cache: Any) -> np.ndarray:
    idx, shape = cache
    n, c, h, w = shape
    blocks = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
    return blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


# ---------------------------------------------------------------------------
# 2x2 stride-2 transposed convolution
# ---------------------------------------------------------------------------
def upconv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, Any]:
    """x (N, C, H, W), w (C, K, 2, 2) -> (N, K, 2H, 2W)."""
    n, _, h, wd = x.shape
    k = w.shape[1]
    out = np.einsum("nchw,ckij->nkhiwj", x, w, optimize=True).reshape(n, k, 2 * h, 2 * wd)
    return out + b[None, :, None, None], (x, w)


def upconv_backward(dout: np.ndarray, cache: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    n, _, h, wd = x.shape
    k = w.shape[1]
    d = dout.reshape(n, k, h, 2, wd, 2)
    db = dout.sum(axis=(0, 2, 3))
    dw = np.einsum("nchw,nkhiwj->ckij", x, d, optimize=True)
    dx = np.einsum("nkhiwj,ckij->nchw", d, w, optimize=True)
    return dx, dw, db


# ---------------------------------------------------------------------------
# Skip connections
# ---------------------------------------------------------------------------
def crop_offsets(src: tuple[int, int], dst: tuple[int, int]) -> tuple[int, int]:
    return (src[0] - dst[0]) // 2, (src[1] - dst[1]) // 2


def crop_concat_forward(skip: np.ndarray, up: np.ndarray) -> tuple[np.ndarray, Any]:
    """Center-crop `skip` to `up`'s size and stack [skip, up] on channels."""
    h, w = up.shape[2:]
    top, left = crop_offsets(skip.shape[2:], (h, w))
    cropped = skip[:, :, top : top + h, left : left + w]
    return np.concatenate([cropped, up], axis=1), (skip.shape, top, left)


def crop_concat_backward(dout: np.ndarray, cache: Any) -> tuple[np.ndarray, np.ndarray]:
    skip_shape, top, left = cache
    c_skip = skip_shape[1]
    h, w = dout.shape[2:]
    dskip = np.zeros(skip_shape, dtype=dout.dtype)
    dskip[:, :, top : top + h, left : left + w] = dout[:, :c_skip]
    return dskip, dout[:, c_skip:]


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)
