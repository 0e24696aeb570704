import numpy as np

from .layers import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    relu_backward,
    relu_forward,
    sigmoid_backward,
    sigmoid_forward,
    upsample2x_backward,
    upsample2x_forward,
)
from .model import (
    ArchConfig,
    ConfigError,
    Model,
    ModelFormatError,
    NumericalError,
    builtin_config,
    load_model,
    parse_config,
    save_model,
)
from .train import TrainConfig, TrainResult, train


def prepare_input(sinograms):
    """Map ``(B, n_angles, n_bins)`` count sinograms to network input ``(B, 1, n_bins, n_angles)``.

    Each sinogram is transposed so detector bins run along the height axis and
    divided by its maximum.
    """
    s = np.asarray(sinograms, dtype=np.float64)
    if s.ndim == 2:
        s = s[None]
    peak = s.max(axis=(1, 2), keepdims=True)
    s = s / np.where(peak > 0, peak, 1.0)
    return np.ascontiguousarray(s.transpose(0, 2, 1)[:, None]).astype(np.float32)


def cnnr_reconstruct(model: Model, sinogram):
    """Reconstruct one ``(n_angles, n_bins)`` sinogram into an ``(n, n)`` image."""
    return model.forward(prepare_input(sinogram))[0, 0].astype(float)


def prepare_target(phantoms):
    """Training targets ``(B, 1, n, n)``: each phantom divided by its maximum.

    Count calibration removes the absolute activity scale from the sinogram,
    so only the relative image is recoverable from the input.
    """
    p = np.asarray(phantoms, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    peak = p.max(axis=(1, 2), keepdims=True)
    return (p / np.where(peak > 0, peak, 1.0))[:, None].astype(np.float32)
