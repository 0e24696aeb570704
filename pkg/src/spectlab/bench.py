"""Benchmark grid: every (method, noise level) cell scored against ground truth.

MLEM and OSEM are scored at every iterate of a sweep and the iterate with the
best mean SSIM over the test set is reported, so the baselines are not
penalized by an arbitrary stopping point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classic import EmConfig, FbpConfig, fbp, mlem, osem
from .core import ScanGeometry, export_pgm
from .dataset import Manifest, generate_arrays, simulate
from .metrics import evaluate
from .noise import CountCalibration
from .phantoms import PhantomSpec, make_rng, shepp_logan
from .projector import Projector

log = logging.getLogger(__name__)

METHODS = ("fbp", "mlem", "osem", "cnnr")
LEVELS = ("low", "medium", "high")
METRICS = ("mse", "mae", "ssim", "pcc")
LABELS = {"fbp": "FBP", "mlem": "MLEM", "osem": "OSEM", "cnnr": "CNNR"}


class BenchError(RuntimeError):
    def __init__(self, method: str, level: str, cause: Exception):
        super().__init__(f"cell {method}/{level}: {cause}")
        self.cell = (method, level)
        self.cause = cause


@dataclass(frozen=True)
class SweepConfig:
    mlem_iterations: int = 100
    osem_iterations: int = 12
    subsets: int = 8


@dataclass
class TestSet:
    """Ground-truth phantoms and their noisy sinograms, one stack per level."""

    geometry: ScanGeometry
    phantoms: np.ndarray
    sinograms: dict = field(default_factory=dict)


@dataclass
class CellResult:
    method: str
    level: str
    reports: list
    iterations: int | None = None
    example: np.ndarray | None = field(default=None, repr=False)

    def mean(self, metric: str) -> float:
        return float(np.mean([getattr(r, metric) for r in self.reports]))


@dataclass
class BenchReport:
    cells: dict

    def rows(self) -> list[tuple[str, str, str, float]]:
        out = [(m, lv, k, cell.mean(k)) for (m, lv), cell in self.cells.items() for k in METRICS]
        return sorted(out)

    def value(self, method: str, level: str, metric: str) -> float:
        return self.cells[method, level].mean(metric)

    def to_csv(self) -> str:
        lines = ["method,noise_level,metric,value"]
        lines += [f"{m},{lv},{k},{v!r}" for m, lv, k, v in self.rows()]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        levels = [lv for lv in LEVELS if any(key[1] == lv for key in self.cells)]
        methods = [m for m in METHODS if any(key[0] == m for key in self.cells)]
        width = 4 * 9
        head = "method  " + "".join(f"| {lv:^{width - 2}} " for lv in levels)
        sub = "        " + "".join("| " + "".join(f"{k.upper():>8} " for k in METRICS)[:-1] + " " for _ in levels)
        lines = [head.rstrip(), sub.rstrip(), "-" * len(sub.rstrip())]
        for m in methods:
            row = f"{LABELS[m]:<8}"
            for lv in levels:
                if (m, lv) in self.cells:
                    row += "| " + "".join(f"{self.value(m, lv, k):8.4f} " for k in METRICS)
                else:
                    row += "| " + " " * (width - 1)
            lines.append(row.rstrip())
        iters = [f"{m}/{lv}={c.iterations}" for (m, lv), c in sorted(self.cells.items()) if c.iterations]
        if iters:
            lines.append("")
            lines.append("best iterates: " + " ".join(iters))
        return "\n".join(lines) + "\n"


def dataset_testset(geometry: ScanGeometry, levels, count: int, seed: int,
                    calibration: CountCalibration, projector: Projector | None = None) -> TestSet:
    """Held-out random phantoms; the same phantoms appear at every level."""
    projector = projector or Projector(geometry)
    spec = PhantomSpec(geometry.n)
    phantoms = None
    sinos = {}
    for level in levels:
        ph, si = generate_arrays(Manifest(geometry, calibration, level, spec, seed, count), projector)
        phantoms = ph if phantoms is None else phantoms
        sinos[level] = si
    return TestSet(geometry, phantoms, sinos)


def shepp_logan_testset(geometry: ScanGeometry, levels, seed: int,
                        calibration: CountCalibration, projector: Projector | None = None) -> TestSet:
    projector = projector or Projector(geometry)
    phantom = shepp_logan(geometry.n)
    sinos = {}
    for level in levels:
        rng = make_rng(seed, LEVELS.index(level))
        sinos[level] = simulate(phantom, projector, level, calibration, rng)[None]
    return TestSet(geometry, phantom[None], sinos)


def _score(recon, truth, method, level, index):
    return evaluate(recon, truth, method=method, noise_level=level, phantom_id=str(index))


def _run_fbp(test: TestSet, level: str) -> CellResult:
    sinos = test.sinograms[level]
    images = [fbp(s, test.geometry, FbpConfig()) for s in sinos]
    reports = [_score(r, t, "fbp", level, i) for i, (r, t) in enumerate(zip(images, test.phantoms))]
    return CellResult("fbp", level, reports, example=images[0])


def _run_em(method: str, test: TestSet, level: str, projector: Projector, sweep: SweepConfig) -> CellResult:
    """Score every iterate of the sweep, keep the iterate with the best mean SSIM."""
    if method == "mlem":
        iterations, config = sweep.mlem_iterations, EmConfig(iterations=sweep.mlem_iterations)
    else:
        iterations, config = sweep.osem_iterations, EmConfig(iterations=sweep.osem_iterations, subsets=sweep.subsets)
    sinos = test.sinograms[level]
    per_iter = [[None] * len(sinos) for _ in range(iterations)]
    for i, (sino, truth) in enumerate(zip(sinos, test.phantoms)):
        def record(it, *rest, i=i, truth=truth):
            img = rest[-1]
            # osem reports every subset update; score full passes only
            if method == "mlem" or rest[0] == sweep.subsets - 1:
                per_iter[it][i] = _score(img, truth, method, level, i)
        if method == "mlem":
            mlem(sino, projector, config, record)
        else:
            osem(sino, projector, config, record)
    ssims = [np.mean([r.ssim for r in reports]) for reports in per_iter]
    best = int(np.argmax(ssims))
    example = _em_image(method, test.sinograms[level][0], projector, sweep, best + 1)
    log.info("%s/%s best iterate %d (ssim %.4f)", method, level, best + 1, ssims[best])
    return CellResult(method, level, per_iter[best], iterations=best + 1, example=example)


def _em_image(method, sino, projector, sweep, iterations):
    if method == "mlem":
        return mlem(sino, projector, EmConfig(iterations=iterations)).image
    return osem(sino, projector, EmConfig(iterations=iterations, subsets=sweep.subsets)).image


def _run_cnnr(test: TestSet, level: str, model) -> CellResult:
    from .nn import prepare_input

    out = model.forward(prepare_input(test.sinograms[level]))[:, 0].astype(np.float64)
    reports = [_score(r, t, "cnnr", level, i) for i, (r, t) in enumerate(zip(out, test.phantoms))]
    return CellResult("cnnr", level, reports, example=out[0])


def run_bench(test: TestSet, methods=METHODS, levels=LEVELS, models=None,
              sweep: SweepConfig = SweepConfig(), projector: Projector | None = None) -> BenchReport:
    """Run every requested cell; ``models`` maps level -> trained CNNR model."""
    projector = projector or Projector(test.geometry)
    models = models or {}
    cells = {}
    for level in levels:
        for method in methods:
            try:
                if method == "fbp":
                    cell = _run_fbp(test, level)
                elif method in ("mlem", "osem"):
                    cell = _run_em(method, test, level, projector, sweep)
                elif method == "cnnr":
                    if level not in models:
                        raise FileNotFoundError(f"no CNNR model for noise level {level!r}")
                    cell = _run_cnnr(test, level, models[level])
                else:
                    raise ValueError(f"unknown method {method!r}")
            except Exception as exc:
                raise BenchError(method, level, exc) from exc
            if not all(np.isfinite([getattr(r, k) for r in cell.reports for k in METRICS])):
                raise BenchError(method, level, FloatingPointError("non-finite metric"))
            cells[method, level] = cell
    return BenchReport(cells)


def write_report(report: BenchReport, test: TestSet, out) -> Path:
    """CSV, text table and one PGM per cell (first test item) plus the truth."""
    out = Path(out)
    images = out / "images"
    images.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    export_pgm(test.phantoms[0], images / "truth.pgm")
    for (method, level), cell in sorted(report.cells.items()):
        export_pgm(cell.example, images / f"{method}-{level}.pgm")
    return out

