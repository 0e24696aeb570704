"""Random training phantoms and the Shepp-Logan evaluation phantom.

All shapes are rasterized by point-sampling pixel centers in the same
coordinate frame as the projector (x to the right, y up, origin at the
grid center).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("ellipse", "rectangle", "blob")

# (x0, y0, a, b, angle in degrees, intensity) in units of the half field of view.
# Geometry of the original ten-ellipse head phantom with the "modified"
# intensities, which keep the composed image inside [0, 1].
SHEPP_LOGAN_ELLIPSES = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.606, 0.023, 0.023, 0.0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
)


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of the random phantom generator.

    Each shape gets a center uniform in the inscribed disk, half-extents
    uniform in ``[n/16, n/3]``, a rotation uniform in ``[0, pi)`` and an
    intensity uniform in ``[0.2, 1.0]``. Blobs are Gaussians whose standard
    deviations are half the drawn extents.
    """

    n: int = 32
    min_shapes: int = 1
    max_shapes: int = 8
    kinds: tuple[str, ...] = KINDS

    def __post_init__(self):
        if not 0 <= self.min_shapes <= self.max_shapes:
            raise ValueError(f"bad shape count range [{self.min_shapes}, {self.max_shapes}]")
        unknown = set(self.kinds) - set(KINDS)
        if unknown or not self.kinds:
            raise ValueError(f"unknown shape kinds {sorted(unknown)}")


def pixel_coords(n: int) -> tuple[np.ndarray, np.ndarray]:
    c = np.arange(n) - (n - 1) / 2.0
    return np.meshgrid(c, -c)  # x varies along columns, y decreases down rows


def fov_mask(n: int) -> np.ndarray:
    x, y = pixel_coords(n)
    return x**2 + y**2 <= (n / 2.0) ** 2


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator keyed on ``(seed, *stream)`` via SeedSequence hashing."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), *stream])))


def _rotated(x, y, cx, cy, angle):
    c, s = np.cos(angle), np.sin(angle)
    dx, dy = x - cx, y - cy
    return dx * c + dy * s, -dx * s + dy * c


def random_phantom(spec: PhantomSpec, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    n = spec.n
    x, y = pixel_coords(n)
    image = np.zeros((n, n))
    count = int(rng.integers(spec.min_shapes, spec.max_shapes, endpoint=True))
    radius = n / 2.0
    for _ in range(count):
        kind = spec.kinds[int(rng.integers(len(spec.kinds)))]
        r = radius * np.sqrt(rng.random())
        phi = 2 * np.pi * rng.random()
        cx, cy = r * np.cos(phi), r * np.sin(phi)
        a, b = rng.uniform(n / 16, n / 3, size=2)
        angle = rng.uniform(0, np.pi)
        intensity = rng.uniform(0.2, 1.0)
        u, v = _rotated(x, y, cx, cy, angle)
        if kind == "ellipse":
            image += intensity * ((u / a) ** 2 + (v / b) ** 2 <= 1)
        elif kind == "rectangle":
            image += intensity * ((np.abs(u) <= a) & (np.abs(v) <= b))
        else:
            image += intensity * np.exp(-0.5 * ((2 * u / a) ** 2 + (2 * v / b) ** 2))
    image = np.clip(image, 0.0, 1.0)
    image[~fov_mask(n)] = 0.0
    return image


def shepp_logan(n: int) -> np.ndarray:
    """Rasterize the head phantom on an n x n grid spanning [-1, 1]^2."""
    if n < 32:
        raise ValueError(f"Shepp-Logan needs n >= 32, got {n}")
    x, y = pixel_coords(n)
    x, y = x / (n / 2.0), y / (n / 2.0)
    image = np.zeros((n, n))
    for x0, y0, a, b, deg, value in SHEPP_LOGAN_ELLIPSES:
        u, v = _rotated(x, y, x0, y0, np.deg2rad(deg))
        image += value * ((u / a) ** 2 + (v / b) ** 2 <= 1)
    return np.maximum(image, 0.0)
