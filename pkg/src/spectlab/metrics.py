"""Image-quality metrics: MSE, MAE, SSIM and Pearson correlation.

Both images are min-max normalized to [0, 1] before any metric is taken,
so reconstructions on different intensity scales (signed FBP output,
count-scaled EM output, [0, 1] network output) are compared on equal terms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .ssim import SsimParams, ssim, ssim_windowed

METRICS = ("mse", "mae", "ssim", "pcc")


@dataclass
class MetricReport:
    mse: float
    mae: float
    ssim: float
    pcc: float
    method: str = ""
    noise_level: str = ""
    phantom_id: str = ""
    pcc_degenerate: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def normalize(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    lo, hi = image.min(), image.max()
    if hi == lo:
        return np.zeros_like(image)
    return (image - lo) / (hi - lo)


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def mae(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean(np.abs(x - y)))


def pcc_flagged(x, y) -> tuple[float, bool]:
    """Pearson correlation; returns ``(0.0, True)`` when either input is constant."""
    x, y = _pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.mean(dx * dx)), np.sqrt(np.mean(dy * dy))
    if sx == 0 or sy == 0:
        return 0.0, True
    r = float(np.mean(dx * dy) / (sx * sy))
    return min(1.0, max(-1.0, r)), False


def pcc(x, y) -> float:
    return pcc_flagged(x, y)[0]


def evaluate(reconstruction, truth, *, windowed: bool = False, **labels) -> MetricReport:
    recon, truth = _pair(reconstruction, truth)
    if not (np.all(np.isfinite(recon)) and np.all(np.isfinite(truth))):
        raise ValueError("metrics need finite images")
    a, b = normalize(recon), normalize(truth)
    params = SsimParams(dynamic_range=1.0)
    r, degenerate = pcc_flagged(a, b)
    return MetricReport(
        mse=mse(a, b),
        mae=mae(a, b),
        ssim=ssim_windowed(a, b, params) if windowed else ssim(a, b, params),
        pcc=r,
        pcc_degenerate=degenerate,
        **labels,
    )
