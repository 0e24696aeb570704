"""Emission tomography reconstruction lab: projector, classical EM/FBP
reconstructors and a sinogram-to-image convolutional network."""

from .core import ScanGeometry, export_pgm, read_array, write_array
from .projector import Projector

__all__ = ["ScanGeometry", "Projector", "read_array", "write_array", "export_pgm"]
__version__ = "0.1.0"
