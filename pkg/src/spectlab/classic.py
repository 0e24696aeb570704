"""Filtered back projection and EM-family (MLEM, OSEM) reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import toeplitz

from .core import ScanGeometry, check_sinogram
from .phantoms import pixel_coords
from .projector import Projector

FILTERS = ("ramlak", "hann")


@dataclass(frozen=True)
class FbpConfig:
    filter: str = "ramlak"

    def __post_init__(self):
        if self.filter not in FILTERS:
            raise ValueError(f"unknown filter {self.filter!r}; expected one of {FILTERS}")


@dataclass(frozen=True)
class EmConfig:
    iterations: int = 100
    subsets: int = 8
    epsilon: float = 1e-12
    initial: float | None = None  # None: uniform image matching the measured total counts

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.subsets < 1:
            raise ValueError("subsets must be >= 1")
        if self.initial is not None and not self.initial > 0:
            raise ValueError("initial image value must be strictly positive")


@dataclass
class EmResult:
    image: np.ndarray
    loglik: list[float] = field(default_factory=list)


def ramp_kernel(half_width: int, bin_width: float = 1.0) -> np.ndarray:
    """Discrete Ram-Lak kernel ``h[-half_width .. half_width]``."""
    if half_width < 1:
        raise ValueError("half_width must be >= 1")
    k = np.arange(-half_width, half_width + 1)
    h = np.zeros(k.shape)
    h[half_width] = 1.0 / (4 * bin_width**2)
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi**2 * k[odd] ** 2 * bin_width**2)
    return h


def filter_kernel(half_width: int, bin_width: float, name: str) -> np.ndarray:
    h = ramp_kernel(half_width + 1, bin_width)
    if name == "hann":
        # Hann apodization up to the Nyquist frequency is a [1/4, 1/2, 1/4] smoothing in space
        h = 0.5 * h[1:-1] + 0.25 * h[:-2] + 0.25 * h[2:]
    else:
        h = h[1:-1]
    return h


def filter_sinogram(sinogram: np.ndarray, bin_width: float, name: str = "ramlak") -> np.ndarray:
    nr = sinogram.shape[1]
    h = filter_kernel(max(nr - 1, 1), bin_width, name)
    centre = h.size // 2
    # H[k, l] = h[k - l]: full linear convolution restricted to the central nr outputs
    col = h[centre:centre + nr]
    row = h[centre::-1][:nr]
    conv = toeplitz(col, row)
    return bin_width * (np.asarray(sinogram, dtype=np.float64) @ conv.T)


def backproject_interp(filtered: np.ndarray, geometry: ScanGeometry) -> np.ndarray:
    """Pixel-driven backprojection with linear interpolation across bins."""
    x, y = pixel_coords(geometry.n)
    nr = geometry.n_bins
    image = np.zeros(geometry.image_shape)
    padded = np.zeros(nr + 4)
    for theta, row in zip(geometry.angles, filtered):
        padded[2:-2] = row
        u = (x * np.cos(theta) + y * np.sin(theta)) / geometry.bin_width + (nr - 1) / 2.0
        u = np.clip(u, -2.0, nr + 0.5)
        i0 = np.floor(u).astype(np.int64)
        w = u - i0
        image += (1 - w) * padded[i0 + 2] + w * padded[i0 + 3]
    return image


def fbp(sinogram: np.ndarray, geometry: ScanGeometry, config: FbpConfig = FbpConfig()) -> np.ndarray:
    """Filtered back projection; the output is signed (negatives are kept)."""
    sinogram = check_sinogram(sinogram, geometry)
    filtered = filter_sinogram(sinogram, geometry.bin_width, config.filter)
    return backproject_interp(filtered, geometry) * (geometry.angle_span / (2 * geometry.n_angles))


def poisson_loglik(y: np.ndarray, ybar: np.ndarray, eps: float = 1e-12) -> float:
    y = y.reshape(-1)
    ybar = ybar.reshape(-1)
    pos = y > 0
    return float(np.sum(y[pos] * np.log(np.maximum(ybar[pos], eps))) - np.sum(ybar))


def _ratio(y: np.ndarray, ybar: np.ndarray, eps: float) -> np.ndarray:
    # (PF)_i <= eps: ratio 0 when y_i == 0, y_i / eps otherwise
    return np.where(ybar > eps, y / np.where(ybar > eps, ybar, 1.0), y / eps)


def _initial_image(y: np.ndarray, sens: np.ndarray, config: EmConfig) -> np.ndarray:
    support = sens > 0
    if config.initial is not None:
        value = config.initial
    else:
        total_sens = sens[support].sum()
        value = y.sum() / total_sens if y.sum() > 0 and total_sens > 0 else 1.0
    return np.where(support, value, 0.0)


def subset_rows(sino_shape: tuple[int, int], subsets: int, t: int) -> np.ndarray:
    n_angles, n_bins = sino_shape
    angles = np.arange(t, n_angles, subsets)
    return (angles[:, None] * n_bins + np.arange(n_bins)[None, :]).reshape(-1)


def osem(
    sinogram: np.ndarray,
    projector: Projector,
    config: EmConfig = EmConfig(iterations=12, subsets=8),
    callback: Callable[[int, int, np.ndarray], None] | None = None,
) -> EmResult:
    """Ordered-subset EM with interleaved angle subsets.

    ``callback(iteration, subset, image)`` is invoked after every subset
    update; ``loglik`` holds the full-data Poisson log-likelihood after each
    complete pass.
    """
    y = np.asarray(sinogram, dtype=np.float64)
    if y.shape != projector.sino_shape:
        raise ValueError(f"sinogram shape {y.shape} != {projector.sino_shape}")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise ValueError("sinogram must be finite and nonnegative")
    n_angles = projector.sino_shape[0]
    if n_angles % config.subsets:
        raise ValueError(f"{config.subsets} subsets do not divide {n_angles} angles")

    A = projector.matrix
    yflat = y.reshape(-1)
    sens = np.asarray(projector.sensitivity(), dtype=np.float64).reshape(-1)
    f = _initial_image(yflat, sens, config)

    if config.subsets == 1:
        blocks = [(A, yflat, sens)]
    else:
        blocks = []
        for t in range(config.subsets):
            rows = subset_rows(projector.sino_shape, config.subsets, t)
            sub = A[rows]
            blocks.append((sub, yflat[rows], np.asarray(sub.sum(axis=0)).reshape(-1)))

    eps = config.epsilon
    result = EmResult(image=f)
    for it in range(config.iterations):
        for t, (sub, ysub, ssub) in enumerate(blocks):
            back = sub.T @ _ratio(ysub, sub @ f, eps)
            active = ssub > 0
            f = np.where(active, f * back / np.where(active, ssub, 1.0), f)
            if callback is not None:
                callback(it, t, f.reshape(projector.image_shape))
        result.loglik.append(poisson_loglik(yflat, A @ f, eps))
    result.image = f.reshape(projector.image_shape)
    return result


def mlem(
    sinogram: np.ndarray,
    projector: Projector,
    config: EmConfig = EmConfig(),
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> EmResult:
    """Maximum-likelihood EM; ``loglik[k]`` is the log-likelihood after iteration k+1."""
    single = EmConfig(iterations=config.iterations, subsets=1, epsilon=config.epsilon, initial=config.initial)
    hook = None if callback is None else (lambda it, _t, img: callback(it, img))
    return osem(sinogram, projector, single, hook)
