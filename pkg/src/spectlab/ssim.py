"""Structural similarity, shared by the training loss and the evaluation metric.

The default form uses global image statistics (means, population variances
and covariance over all pixels); :func:`ssim_windowed` averages the same
expression over uniform 8x8 windows at stride 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def _check(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ValueError("ssim of empty input")
    return x, y


def ssim(x, y, params: SsimParams = SsimParams()) -> float:
    x, y = _check(x, y)
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy, cxy = np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy)
    c1, c2 = params.c1, params.c2
    return float((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))


def ssim_loss_backward(x, y, params: SsimParams = SsimParams()) -> np.ndarray:
    """Gradient of ``1 - ssim(x, y)`` with respect to every element of ``x``."""
    x, y = _check(x, y)
    n = x.size
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy, cxy = np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy)
    c1, c2 = params.c1, params.c2
    a1, a2 = 2 * mx * my + c1, 2 * cxy + c2
    b1, b2 = mx * mx + my * my + c1, vx + vy + c2
    s = a1 * a2 / (b1 * b2)
    # d(mu_x)/dx_i = 1/n, d(var_x)/dx_i = 2 dx_i / n, d(cov)/dx_i = dy_i / n
    grad = (2 * my * a2 + 2 * a1 * dy) / (n * b1 * b2) - s * (2 * mx / (n * b1) + 2 * dx / (n * b2))
    return -grad


def ssim_batch(x: np.ndarray, y: np.ndarray, params: SsimParams = SsimParams()) -> tuple[np.ndarray, np.ndarray]:
    """Per-item SSIM and ``d(1 - SSIM)/dx`` for batches shaped ``(B, ...)``."""
    b = x.shape[0]
    xf = x.reshape(b, -1)
    yf = y.reshape(b, -1).astype(xf.dtype, copy=False)
    n = xf.shape[1]
    mx, my = xf.mean(axis=1, keepdims=True), yf.mean(axis=1, keepdims=True)
    dx, dy = xf - mx, yf - my
    vx = np.mean(dx * dx, axis=1, keepdims=True)
    vy = np.mean(dy * dy, axis=1, keepdims=True)
    cxy = np.mean(dx * dy, axis=1, keepdims=True)
    c1, c2 = params.c1, params.c2
    a1, a2 = 2 * mx * my + c1, 2 * cxy + c2
    b1, b2 = mx * mx + my * my + c1, vx + vy + c2
    s = a1 * a2 / (b1 * b2)
    grad = (2 * my * a2 + 2 * a1 * dy) / (n * b1 * b2) - s * (2 * mx / (n * b1) + 2 * dx / (n * b2))
    return s.reshape(b), (-grad).reshape(x.shape)


def ssim_windowed(x, y, params: SsimParams = SsimParams(), window: int = 8, stride: int = 4) -> float:
    x, y = _check(x, y)
    if x.ndim != 2:
        raise ValueError("windowed SSIM expects 2-D images")
    h, w = x.shape
    if h < window or w < window:
        return ssim(x, y, params)
    scores = [
        ssim(x[r:r + window, c:c + window], y[r:r + window, c:c + window], params)
        for r in range(0, h - window + 1, stride)
        for c in range(0, w - window + 1, stride)
    ]
    return float(np.mean(scores))
