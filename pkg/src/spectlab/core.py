"""Domain containers and on-disk formats.

Images are ``(n, n)`` float arrays indexed ``[row, col]``; sinograms are
``(n_angles, n_bins)`` float arrays, one contiguous row per projection angle.

The array file layout (all little-endian)::

    magic   4 bytes  b"TOMO"
    version u8       1
    dtype   u8       1  (float32)
    ndim    u8
    dims    ndim x u32
    payload prod(dims) x float32, row-major
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"TOMO"
VERSION = 1
DTYPE_F32 = 1
_U32_MAX = 2**32 - 1


class ArrayFormatError(ValueError):
    """Raised when an array file cannot be decoded."""


class BadMagicError(ArrayFormatError):
    pass


class UnsupportedFormatError(ArrayFormatError):
    pass


class TruncatedFileError(ArrayFormatError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"truncated payload: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


@dataclass(frozen=True)
class ScanGeometry:
    """Parallel-beam acquisition geometry.

    Angles are ``k * angle_span / n_angles`` for ``k = 0 .. n_angles-1``,
    counterclockwise from the +x axis. Bin ``k`` sits at detector coordinate
    ``(k - (n_bins - 1) / 2) * bin_width`` (pixel units).
    """

    n: int
    n_angles: int
    n_bins: int
    bin_width: float = 1.0
    angle_span: float = 2 * math.pi

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"image side must be >= 1, got {self.n}")
        if self.n_angles < 1:
            raise ValueError(f"need at least one angle, got {self.n_angles}")
        if self.bin_width <= 0:
            raise ValueError(f"bin_width must be > 0, got {self.bin_width}")
        if self.n_bins * self.bin_width < self.n * math.sqrt(2):
            raise ValueError(
                f"detector ({self.n_bins} bins x {self.bin_width}) does not cover "
                f"the image diagonal {self.n * math.sqrt(2):.2f}"
            )

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * (self.angle_span / self.n_angles)

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) - (self.n_bins - 1) / 2) * self.bin_width

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.n_angles, self.n_bins)

    @classmethod
    def desk(cls) -> "ScanGeometry":
        return cls(n=32, n_angles=32, n_bins=48)

    @classmethod
    def full(cls) -> "ScanGeometry":
        return cls(n=128, n_angles=128, n_bins=192)


def check_image(image: np.ndarray, n: int | None = None, nonnegative: bool = False) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"image must be square 2-D, got shape {image.shape}")
    if n is not None and image.shape[0] != n:
        raise ValueError(f"image side {image.shape[0]} does not match geometry n={n}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    if nonnegative and np.any(image < 0):
        raise ValueError("activity image has negative values")
    return image


def check_sinogram(sino: np.ndarray, geometry: ScanGeometry | None = None) -> np.ndarray:
    sino = np.asarray(sino)
    if sino.ndim != 2:
        raise ValueError(f"sinogram must be 2-D, got shape {sino.shape}")
    if geometry is not None and sino.shape != geometry.sino_shape:
        raise ValueError(f"sinogram shape {sino.shape} does not match geometry {geometry.sino_shape}")
    if not np.all(np.isfinite(sino)):
        raise ValueError("sinogram contains non-finite values")
    return sino


def pack_array(dims: Sequence[int], values) -> bytes:
    dims = [int(d) for d in dims]
    if not dims:
        raise ValueError("dims must be nonempty")
    if any(d < 0 or d > _U32_MAX for d in dims):
        raise ValueError(f"dims {dims} do not fit in u32")
    if len(dims) > 255:
        raise ValueError("too many dimensions")
    payload = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
    if payload.size != math.prod(dims):
        raise ValueError(f"{payload.size} values do not match dims {dims}")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_F32, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    return header + payload.tobytes()


def unpack_array(buf: bytes, offset: int = 0) -> tuple[list[int], np.ndarray, int]:
    """Decode one array starting at ``offset``; returns ``(dims, values, next_offset)``."""
    if buf[offset:offset + 4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[offset:offset + 4])!r}")
    if len(buf) < offset + 7:
        raise TruncatedFileError(offset + 7, len(buf))
    version, dtype, ndim = struct.unpack_from("<BBB", buf, offset + 4)
    if version != VERSION:
        raise UnsupportedFormatError(f"unsupported version {version}")
    if dtype != DTYPE_F32:
        raise UnsupportedFormatError(f"unsupported dtype code {dtype}")
    pos = offset + 7
    if len(buf) < pos + 4 * ndim:
        raise TruncatedFileError(pos + 4 * ndim - offset, len(buf) - offset)
    dims = list(struct.unpack_from(f"<{ndim}I", buf, pos))
    pos += 4 * ndim
    nbytes = 4 * math.prod(dims)
    available = len(buf) - pos
    if available < nbytes:
        raise TruncatedFileError(nbytes, available)
    values = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos).astype(np.float32)
    return dims, values, pos + nbytes


def write_array(path, dims: Sequence[int], values) -> None:
    Path(path).write_bytes(pack_array(dims, values))


def read_array(path) -> tuple[list[int], np.ndarray]:
    """Read an array file; values come back flat, in row-major order."""
    buf = Path(path).read_bytes()
    dims, values, _ = unpack_array(buf)
    return dims, values


def save_image(path, image: np.ndarray) -> None:
    write_array(path, image.shape, image)


def load_image(path) -> np.ndarray:
    dims, values = read_array(path)
    return values.reshape(dims)


def to_gray8(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    lo, hi = image.min(), image.max()
    if hi == lo:
        return np.full(image.shape, 128, dtype=np.uint8)
    scaled = (image - lo) / (hi - lo) * 255.0
    # rounding to 1e-6 keeps exact half-levels stable under affine rescaling
    scaled = np.round(scaled, 6)
    return np.floor(scaled + 0.5).astype(np.uint8)


def export_pgm(image: np.ndarray, path) -> None:
    """Write an 8-bit binary PGM (P5), min-max normalized, rounding half up.

    A constant image is written as mid-gray 128.
    """
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    pixels = to_gray8(image)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
