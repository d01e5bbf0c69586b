"""Layer primitives with analytic gradients.

Tensors are ``(batch, channels, height, width)`` numpy arrays; all
functions are dtype-preserving so gradient checks can run in float64 while
training runs in float32.
"""

from __future__ import annotations

import numpy as np

from .. import _backend
from ..errors import InvariantError, ShapeMismatchError


def _check4(x, name="x"):
    if x.ndim != 4:
        raise ShapeMismatchError(f"{name} must be 4-D (N, C, H, W), got shape {x.shape}")


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, padding: str | int = "same"):
    """Stride-1 cross-correlation.

    ``weights`` is ``(C_out, C_in, k, k)``; ``padding="same"`` zero-pads by
    ``k // 2``.  Returns ``(out, cols)``; ``cols`` is the im2col buffer that
    :func:`conv2d_backward` can reuse.
    """
    _check4(x)
    cout, cin, kh, kw = weights.shape
    if kh != kw:
        raise ShapeMismatchError(f"only square kernels are supported, got {kh}x{kw}")
    if x.shape[1] != cin:
        raise ShapeMismatchError(f"input has {x.shape[1]} channels, weights expect {cin}")
    if bias.shape != (cout,):
        raise ShapeMismatchError(f"bias shape {bias.shape} != ({cout},)")
    pad = kh // 2 if padding == "same" else int(padding)
    n, _, h, w = x.shape
    ho, wo = h + 2 * pad - kh + 1, w + 2 * pad - kw + 1
    cols = _backend.kernels.im2col(np.ascontiguousarray(x), kh, pad)
    out = np.matmul(weights.reshape(cout, -1), cols)
    out += bias[None, :, None]
    return out.reshape(n, cout, ho, wo), cols


def conv2d_backward(x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray, padding: str | int = "same", cols=None):
    """Gradients of :func:`conv2d_forward` w.r.t. input, weights and bias."""
    _check4(x)
    _check4(grad_out, "grad_out")
    cout, cin, kh, kw = weights.shape
    pad = kh // 2 if padding == "same" else int(padding)
    n = x.shape[0]
    if grad_out.shape[:2] != (n, cout):
        raise ShapeMismatchError(f"grad_out shape {grad_out.shape} inconsistent with forward")
    if cols is None:
        cols = _backend.kernels.im2col(np.ascontiguousarray(x), kh, pad)
    g = grad_out.reshape(n, cout, -1)
    grad_w = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weights.shape)
    grad_b = g.sum(axis=(0, 2))
    grad_cols = np.matmul(weights.reshape(cout, -1).T, g)
    grad_x = _backend.kernels.col2im(grad_cols, x.shape, kh, pad)
    return grad_x, grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient 0 at x == 0
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def maxpool2x2(x: np.ndarray):
    """Returns ``(pooled, indices)``; ``indices`` are window positions 0..3
    in row-major order, ties resolved to the first."""
    _check4(x)
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeMismatchError(f"max pooling needs even spatial dims, got {x.shape[2:]}")
    return _backend.kernels.maxpool2x2(x)


def unpool2x2(y: np.ndarray, idx: np.ndarray) -> np.ndarray:
    _check4(y, "y")
    if idx.shape != y.shape:
        raise ShapeMismatchError(f"pool indices {idx.shape} do not match input {y.shape}")
    if idx.size and idx.max() > 3:
        raise InvariantError("pool index outside its 2x2 window")
    return _backend.kernels.unpool2x2(y, idx)


def maxpool2x2_backward(idx: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return _backend.kernels.unpool2x2(grad_out, idx)


def unpool2x2_backward(idx: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return _backend.kernels.unpool2x2_backward(grad_out, idx)


def softmax_per_pixel(logits: np.ndarray) -> np.ndarray:
    """Softmax over the channel axis with per-pixel max subtraction."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def weighted_cross_entropy(probs: np.ndarray, target: np.ndarray, class_weights) -> tuple[float, np.ndarray]:
    """Mean per-pixel weighted negative log-likelihood.

    ``target`` holds class ids shaped ``(N, H, W)`` (or ``(H, W)`` for a
    single image).  Returns the loss and its gradient with respect to the
    logits that produced ``probs`` through :func:`softmax_per_pixel`.
    """
    if probs.ndim == 3:
        probs = probs[None]
    target = np.asarray(target)
    if target.ndim == 2:
        target = target[None]
    n, c, h, w = probs.shape
    if target.shape != (n, h, w):
        raise ShapeMismatchError(f"target {target.shape} does not match probabilities {probs.shape}")
    if target.size and (target.min() < 0 or target.max() >= c):
        raise InvariantError(f"labels must lie in 0..{c - 1}")
    wts = np.asarray(class_weights.w if hasattr(class_weights, "w") else class_weights, dtype=probs.dtype)
    if wts.shape != (c,):
        raise ShapeMismatchError(f"{wts.shape[0]} class weights for {c} classes")
    t = target.astype(np.intp)
    p_true = np.take_along_axis(probs, t[:, None], axis=1)[:, 0]
    wp = wts[t]
    npix = n * h * w
    loss = float(-(wp * np.log(np.maximum(p_true, 1e-12))).sum() / npix)
    grad = probs.copy()
    np.put_along_axis(grad, t[:, None], p_true[:, None] - 1, axis=1)
    grad *= (wp / npix)[:, None]
    return loss, grad
