"""Layer primitives with hand-written gradients.

Tensors are NCHW for convolutional layers and (batch, features) for dense
layers. Every backward function returns exact gradients of its forward map
and works in whatever float dtype it is given.
"""

from __future__ import annotations

import numpy as np


def _conv_out(size: int, k: int, stride: int) -> int:
    return (size + 2 * (k // 2) - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Patch matrix shaped ``(C*k*k, B*Ho*Wo)``, rows ordered like ``w.reshape(O, -1)``."""
    B, C, H, W = x.shape
    p = k // 2
    Ho, Wo = _conv_out(H, k, stride), _conv_out(W, k, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))).transpose(1, 0, 2, 3)
    cols = np.empty((C, k, k, B, Ho, Wo), dtype=x.dtype)
    for dy in range(k):
        for dx in range(k):
            cols[:, dy, dx] = xp[:, :, dy:dy + stride * (Ho - 1) + 1:stride, dx:dx + stride * (Wo - 1) + 1:stride]
    return cols.reshape(C * k * k, B * Ho * Wo)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Zero-padded ('same' for stride 1) 2-D cross-correlation.

    ``x``: (B, C, H, W); ``w``: (O, C, k, k) with odd k; ``b``: (O,).
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv shape mismatch: input {x.shape}, weights {w.shape}")
    k = w.shape[2]
    if k % 2 == 0 or w.shape[3] != k:
        raise ValueError(f"conv kernel must be square and odd, got {w.shape[2:]}")
    B, _, H, W = x.shape
    out = w.reshape(w.shape[0], -1) @ _im2col(x, k, stride)
    out += b[:, None]
    out = out.reshape(w.shape[0], B, _conv_out(H, k, stride), _conv_out(W, k, stride))
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def conv2d_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray, stride: int = 1):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    O, C, k, _ = w.shape
    p = k // 2
    B, _, H, W = x.shape
    Ho, Wo = grad_out.shape[2:]
    if grad_out.shape != (B, O, _conv_out(H, k, stride), _conv_out(W, k, stride)):
        raise ValueError(f"grad_output shape {grad_out.shape} does not match forward output")
    g = grad_out.transpose(1, 0, 2, 3).reshape(O, -1)
    grad_w = (g @ _im2col(x, k, stride).T).reshape(w.shape)
    grad_b = g.sum(axis=1)

    gcols = (w.reshape(O, -1).T @ g).reshape(C, k, k, B, Ho, Wo)
    gxp = np.zeros((C, B, H + 2 * p, W + 2 * p), dtype=np.result_type(x, grad_out))
    h_end = stride * (Ho - 1) + 1
    w_end = stride * (Wo - 1) + 1
    for dy in range(k):
        for dx in range(k):
            gxp[:, :, dy:dy + h_end:stride, dx:dx + w_end:stride] += gcols[:, dy, dx]
    return gxp[:, :, p:p + H, p:p + W].transpose(1, 0, 2, 3), grad_w, grad_b


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"dense shape mismatch: input {x.shape}, weights {w.shape}")
    return x @ w.T + b


def dense_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    if grad_out.shape != (x.shape[0], w.shape[0]):
        raise ValueError(f"grad_output shape {grad_out.shape} does not match forward output")
    return grad_out @ w, grad_out.T @ x, grad_out.sum(axis=0)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is taken as 0
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1 / (1 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1 + ex)
    return out


def sigmoid_backward(out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient given the forward *output* ``out``."""
    return grad_out * out * (1 - out)


def upsample2x_forward(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2x_backward(grad_out: np.ndarray) -> np.ndarray:
    B, C, H, W = grad_out.shape
    if H % 2 or W % 2:
        raise ValueError(f"upsample grad must have even spatial size, got {grad_out.shape}")
    return grad_out.reshape(B, C, H // 2, 2, W // 2, 2).sum(axis=(3, 5))
