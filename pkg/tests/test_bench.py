import math

import numpy as np
import pytest

from spectlab.bench import (
    LEVELS,
    METHODS,
    BenchError,
    SweepConfig,
    dataset_testset,
    run_bench,
    shepp_logan_testset,
    write_report,
)
from spectlab.classic import EmConfig, mlem
from spectlab.core import ScanGeometry
from spectlab.metrics import evaluate
from spectlab.nn import Model, builtin_config
from spectlab.noise import CountCalibration
from spectlab.projector import Projector

GEO = ScanGeometry.desk()
SWEEP = SweepConfig(mlem_iterations=15, osem_iterations=3, subsets=8)


@pytest.fixture(scope="module")
def projector():
    return Projector(GEO)


@pytest.fixture(scope="module")
def testset(projector):
    return dataset_testset(GEO, LEVELS, 6, 99, CountCalibration(), projector)


@pytest.fixture(scope="module")
def report(testset, projector):
    models = {lv: Model(builtin_config("desk-compact"), seed=i) for i, lv in enumerate(LEVELS)}
    return run_bench(testset, METHODS, LEVELS, models, SWEEP, projector)


def test_report_has_48_finite_values(report):
    rows = report.rows()
    assert len(rows) == 48
    assert all(math.isfinite(v) for *_, v in rows)
    assert rows == sorted(rows)
    assert {(m, lv) for m, lv, _, _ in rows} == {(m, lv) for m in METHODS for lv in LEVELS}


def test_csv_format(report):
    lines = report.to_csv().splitlines()
    assert lines[0] == "method,noise_level,metric,value"
    assert len(lines) == 49
    method, level, metric, value = lines[1].split(",")
    assert float(value) == report.value(method, level, metric)


def test_table_layout(report):
    table = report.to_table()
    for label in ("FBP", "MLEM", "OSEM", "CNNR", "low", "medium", "high", "SSIM", "PCC"):
        assert label in table
    body = [line for line in table.splitlines() if line.startswith(("FBP", "MLEM", "OSEM", "CNNR"))]
    assert [line.split()[0] for line in body] == ["FBP", "MLEM", "OSEM", "CNNR"]
    assert all(len(line.split("|")) == 4 for line in body)


def test_best_iterate_is_reported(report, testset, projector):
    cell = report.cells["mlem", "high"]
    assert 1 <= cell.iterations <= SWEEP.mlem_iterations
    scores = []
    for k in range(1, SWEEP.mlem_iterations + 1):
        images = [mlem(s, projector, EmConfig(iterations=k)).image for s in testset.sinograms["high"]]
        scores.append(np.mean([evaluate(r, t).ssim for r, t in zip(images, testset.phantoms)]))
    assert cell.iterations == int(np.argmax(scores)) + 1
    assert cell.mean("ssim") == pytest.approx(max(scores), rel=1e-12)


def test_classical_ordering_at_low_noise(report):
    fbp = report.value("fbp", "low", "ssim")
    assert fbp < report.value("mlem", "low", "ssim")
    assert fbp < report.value("osem", "low", "ssim")


def test_missing_model_names_cell(testset, projector):
    with pytest.raises(BenchError, match="cell cnnr/low") as info:
        run_bench(testset, ("fbp", "cnnr"), ("low",), {}, SWEEP, projector)
    assert info.value.cell == ("cnnr", "low")


def test_write_report(tmp_path, report, testset):
    out = write_report(report, testset, tmp_path / "r")
    assert (out / "report.csv").read_text() == report.to_csv()
    pgms = sorted(p.name for p in (out / "images").glob("*.pgm"))
    assert len(pgms) == 13 and "truth.pgm" in pgms and "cnnr-high.pgm" in pgms


def test_shepp_logan_testset(projector):
    test = shepp_logan_testset(GEO, ("low", "high"), 3, CountCalibration(), projector)
    assert test.phantoms.shape == (1, 32, 32)
    low, high = test.sinograms["low"].sum(), test.sinograms["high"].sum()
    assert high / low == pytest.approx(0.1 / 0.9, rel=0.05)
    result = run_bench(test, ("fbp", "mlem"), ("low",), None, SWEEP, projector)
    assert len(result.rows()) == 8
