"""Parallel-beam system matrix from exact ray/pixel intersection lengths.

Pixel ``[row, col]`` has its center at ``x = col - (n-1)/2``,
``y = (n-1)/2 - row`` and unit size. For angle ``theta`` the detector axis is
``(cos theta, sin theta)`` and each ray runs along ``(-sin theta, cos theta)``
through its bin center. Coefficient ``P[i, j]`` is the length of ray ``i``
inside pixel ``j`` (Siddon traversal), with ``i = angle * n_bins + bin`` and
``j = row * n + col``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import ScanGeometry, check_image, check_sinogram

# segments shorter than this are corner grazes and are dropped
_MIN_SEGMENT = 1e-9
_PARALLEL = 1e-12


def trace_rays(n: int, theta: float, offsets: np.ndarray):
    """Trace parallel rays at detector offsets ``offsets`` through an n x n grid.

    Returns ``(ray, pixel, length)`` arrays, one entry per traversed pixel
    segment, where ``ray`` indexes into ``offsets``.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    dx, dy = -s, c
    if abs(dx) < _PARALLEL:
        dx = 0.0
    if abs(dy) < _PARALLEL:
        dy = 0.0
    px, py = offsets * c, offsets * s
    half = n / 2.0
    planes = np.arange(n + 1, dtype=np.float64) - half

    n_rays = offsets.size
    lo = np.full(n_rays, -np.inf)
    hi = np.full(n_rays, np.inf)
    inside = np.ones(n_rays, dtype=bool)
    crossings = []
    for p, d in ((px, dx), (py, dy)):
        if d == 0.0:
            inside &= (p >= -half) & (p < half)
            continue
        a = (-half - p) / d
        b = (half - p) / d
        lo = np.maximum(lo, np.minimum(a, b))
        hi = np.minimum(hi, np.maximum(a, b))
        crossings.append((planes[None, :] - p[:, None]) / d)
    inside &= hi > lo
    lo = np.where(inside, lo, 0.0)
    hi = np.where(inside, hi, 0.0)

    params = np.concatenate(crossings + [lo[:, None], hi[:, None]], axis=1)
    params = np.clip(params, lo[:, None], hi[:, None])
    params.sort(axis=1)
    lengths = np.diff(params, axis=1)
    mid = 0.5 * (params[:, 1:] + params[:, :-1])
    mx = px[:, None] + mid * dx
    my = py[:, None] + mid * dy
    col = np.clip(np.floor(mx + half).astype(np.int64), 0, n - 1)
    row = np.clip(np.floor(half - my).astype(np.int64), 0, n - 1)

    keep = lengths > _MIN_SEGMENT
    ray = np.broadcast_to(np.arange(n_rays)[:, None], lengths.shape)[keep]
    return ray, (row * n + col)[keep], lengths[keep]


def build_system_matrix(geometry: ScanGeometry) -> sp.csr_matrix:
    n, nb = geometry.n, geometry.n_bins
    offsets = geometry.bin_centers
    rows, cols, vals = [], [], []
    for k, theta in enumerate(geometry.angles):
        ray, pix, length = trace_rays(n, theta, offsets)
        rows.append(ray + k * nb)
        cols.append(pix)
        vals.append(length)
    shape = (geometry.n_angles * nb, n * n)
    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


class Projector:
    """Forward projector and its exact transpose for one geometry.

    The sparse matrix is built once at construction; all products are
    evaluated in float64.
    """

    def __init__(self, geometry: ScanGeometry):
        self.geometry = geometry
        self.image_shape = geometry.image_shape
        self.sino_shape = geometry.sino_shape
        self.matrix = build_system_matrix(geometry)
        self._sensitivity = None

    @classmethod
    def from_matrix(cls, matrix, image_shape, sino_shape) -> "Projector":
        """Wrap an explicit matrix, e.g. a toy system for testing the EM updates."""
        self = cls.__new__(cls)
        self.geometry = None
        self.image_shape = tuple(image_shape)
        self.sino_shape = tuple(sino_shape)
        self.matrix = sp.csr_matrix(matrix, dtype=np.float64)
        if self.matrix.shape != (int(np.prod(sino_shape)), int(np.prod(image_shape))):
            raise ValueError("matrix shape does not match image/sinogram shapes")
        self._sensitivity = None
        return self

    @property
    def n_rays(self) -> int:
        return self.matrix.shape[0]

    def forward(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self.image_shape:
            raise ValueError(f"image shape {image.shape} != {self.image_shape}")
        return (self.matrix @ image.reshape(-1)).reshape(self.sino_shape)

    def back(self, sino: np.ndarray) -> np.ndarray:
        sino = np.asarray(sino, dtype=np.float64)
        if sino.shape != self.sino_shape:
            raise ValueError(f"sinogram shape {sino.shape} != {self.sino_shape}")
        return (self.matrix.T @ sino.reshape(-1)).reshape(self.image_shape)

    def sensitivity(self) -> np.ndarray:
        if self._sensitivity is None:
            self._sensitivity = self.back(np.ones(self.sino_shape))
            self._sensitivity.setflags(write=False)
        return self._sensitivity

    def row(self, ray_index: int) -> list[tuple[int, float]]:
        if not 0 <= ray_index < self.n_rays:
            raise IndexError(f"ray index {ray_index} out of range [0, {self.n_rays})")
        start, stop = self.matrix.indptr[ray_index], self.matrix.indptr[ray_index + 1]
        return [
            (int(j), float(v))
            for j, v in zip(self.matrix.indices[start:stop], self.matrix.data[start:stop])
        ]


def forward_project(projector: Projector, image: np.ndarray) -> np.ndarray:
    if projector.geometry is not None:
        check_image(image, projector.geometry.n)
    return projector.forward(image)


def back_project(projector: Projector, sinogram: np.ndarray) -> np.ndarray:
    if projector.geometry is not None:
        check_sinogram(sinogram, projector.geometry)
    return projector.back(sinogram)


def sensitivity_map(projector: Projector) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(sensitivity, zero_mask)``; the mask flags pixels no ray sees."""
    s = projector.sensitivity()
    return s, s <= 0


def matrix_row(projector: Projector, ray_index: int) -> list[tuple[int, float]]:
    return projector.row(ray_index)
