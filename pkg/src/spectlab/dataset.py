"""Seeded (phantom, noisy sinogram) datasets on disk.

Layout::

    <root>/manifest.txt        key/value header, enough to regenerate every item
    <root>/items/<i>.phantom   array file, (n, n)
    <root>/items/<i>.sino      array file, (n_angles, n_bins), Poisson counts
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ScanGeometry, load_image, save_image
from .noise import CountCalibration, NoiseLevel, apply_poisson, expected_counts
from .phantoms import PhantomSpec, make_rng, random_phantom
from .projector import Projector

FORMAT = "spectlab-dataset 1"
LEVELS = ("none", "low", "medium", "high")
_LEVEL_STREAM = {name: i for i, name in enumerate(LEVELS)}


@dataclass(frozen=True)
class Manifest:
    geometry: ScanGeometry
    calibration: CountCalibration
    noise: str
    phantom: PhantomSpec
    seed: int
    count: int

    def to_text(self) -> str:
        g = self.geometry
        rows = [
            ("format", FORMAT),
            ("n", g.n),
            ("n_angles", g.n_angles),
            ("n_bins", g.n_bins),
            ("bin_width", repr(float(g.bin_width))),
            ("angle_span", repr(float(g.angle_span))),
            ("total_counts", repr(float(self.calibration.total_counts))),
            ("noise", self.noise),
            ("min_shapes", self.phantom.min_shapes),
            ("max_shapes", self.phantom.max_shapes),
            ("seed", self.seed),
            ("count", self.count),
        ]
        return "".join(f"{k} {v}\n" for k, v in rows)

    @classmethod
    def from_text(cls, text: str) -> "Manifest":
        fields = {}
        for line in text.splitlines():
            if line.strip():
                key, _, value = line.partition(" ")
                fields[key] = value.strip()
        if fields.get("format") != FORMAT:
            raise ValueError(f"not a dataset manifest (format {fields.get('format')!r})")
        try:
            n = int(fields["n"])
            geometry = ScanGeometry(
                n, int(fields["n_angles"]), int(fields["n_bins"]),
                float(fields["bin_width"]), float(fields["angle_span"]),
            )
            return cls(
                geometry=geometry,
                calibration=CountCalibration(float(fields["total_counts"])),
                noise=fields["noise"],
                phantom=PhantomSpec(n, int(fields["min_shapes"]), int(fields["max_shapes"])),
                seed=int(fields["seed"]),
                count=int(fields["count"]),
            )
        except KeyError as exc:
            raise ValueError(f"manifest missing field {exc}") from None


def normalize_level(name: str) -> str:
    if name == "none":
        return name
    return NoiseLevel.named(name).name


def item_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def simulate(phantom: np.ndarray, projector: Projector, level: str, calibration: CountCalibration, rng) -> np.ndarray:
    """Project a phantom and turn it into counts; ``none`` gives noiseless expected counts."""
    ideal = projector.forward(phantom)
    if level == "none":
        return expected_counts(ideal, 1.0, calibration)
    return apply_poisson(ideal, NoiseLevel.named(level), calibration, rng)


def make_item(manifest: Manifest, index: int, projector: Projector) -> tuple[np.ndarray, np.ndarray]:
    phantom = random_phantom(manifest.phantom, item_seed(manifest.seed, index))
    if not phantom.any():
        return phantom, np.zeros(manifest.geometry.sino_shape)
    rng = make_rng(manifest.seed, index, 1000 + _LEVEL_STREAM[manifest.noise])
    return phantom, simulate(phantom, projector, manifest.noise, manifest.calibration, rng)


def generate_arrays(manifest: Manifest, projector: Projector | None = None) -> tuple[np.ndarray, np.ndarray]:
    projector = projector or Projector(manifest.geometry)
    g = manifest.geometry
    phantoms = np.zeros((manifest.count, g.n, g.n))
    sinos = np.zeros((manifest.count, *g.sino_shape))
    for i in range(manifest.count):
        phantoms[i], sinos[i] = make_item(manifest, i, projector)
    return phantoms, sinos


def write_dataset(manifest: Manifest, root, projector: Projector | None = None) -> Path:
    root = Path(root)
    items = root / "items"
    items.mkdir(parents=True, exist_ok=True)
    projector = projector or Projector(manifest.geometry)
    for i in range(manifest.count):
        phantom, sino = make_item(manifest, i, projector)
        save_image(items / f"{i}.phantom", phantom)
        save_image(items / f"{i}.sino", sino)
    (root / "manifest.txt").write_text(manifest.to_text(), encoding="utf-8")
    return root


@dataclass
class Dataset:
    manifest: Manifest
    phantoms: np.ndarray = field(repr=False)
    sinograms: np.ndarray = field(repr=False)


def read_dataset(root) -> Dataset:
    root = Path(root)
    manifest = Manifest.from_text((root / "manifest.txt").read_text(encoding="utf-8"))
    g = manifest.geometry
    phantoms = np.zeros((manifest.count, g.n, g.n), dtype=np.float32)
    sinos = np.zeros((manifest.count, *g.sino_shape), dtype=np.float32)
    for i in range(manifest.count):
        phantoms[i] = load_image(root / "items" / f"{i}.phantom")
        sino = load_image(root / "items" / f"{i}.sino")
        if sino.shape != g.sino_shape:
            raise ValueError(f"item {i}: sinogram shape {sino.shape} != {g.sino_shape}")
        sinos[i] = sino
    return Dataset(manifest, phantoms, sinos)
