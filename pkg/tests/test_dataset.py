import numpy as np
import pytest

from spectlab.core import ScanGeometry, load_image
from spectlab.dataset import (
    Manifest,
    generate_arrays,
    item_seed,
    make_item,
    read_dataset,
    write_dataset,
)
from spectlab.noise import CountCalibration
from spectlab.phantoms import PhantomSpec
from spectlab.projector import Projector

GEO = ScanGeometry(n=16, n_angles=16, n_bins=24)


def manifest(noise="high", seed=7, count=6):
    return Manifest(GEO, CountCalibration(5e4), noise, PhantomSpec(16), seed, count)


def test_manifest_round_trip():
    m = manifest()
    assert Manifest.from_text(m.to_text()) == m
    with pytest.raises(ValueError):
        Manifest.from_text("format nope\n")
    with pytest.raises(ValueError):
        Manifest.from_text(m.to_text().replace("count 6\n", ""))


def test_item_seeds_distinct():
    seeds = {item_seed(3, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert item_seed(3, 0) != item_seed(4, 0)


def test_write_is_deterministic(tmp_path):
    a, b = write_dataset(manifest(), tmp_path / "a"), write_dataset(manifest(), tmp_path / "b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) == 13
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_regeneration_from_manifest(tmp_path):
    root = write_dataset(manifest(), tmp_path / "d")
    data = read_dataset(root)
    again = Manifest.from_text((root / "manifest.txt").read_text())
    projector = Projector(again.geometry)
    for i in range(again.count):
        phantom, sino = make_item(again, i, projector)
        assert np.array_equal(load_image(root / "items" / f"{i}.phantom"), phantom.astype(np.float32))
        assert np.array_equal(data.sinograms[i], sino.astype(np.float32))
    assert data.sinograms.shape == (6, 16, 24)


def test_counts_are_integers():
    _, sinos = generate_arrays(manifest(count=3))
    assert np.array_equal(sinos, np.round(sinos)) and sinos.min() >= 0


def test_noise_levels_share_phantoms():
    p_low, _ = generate_arrays(manifest("low"))
    p_high, _ = generate_arrays(manifest("high"))
    assert np.array_equal(p_low, p_high)


def test_high_to_none_count_ratio():
    _, none = generate_arrays(manifest("none", count=40))
    _, high = generate_arrays(manifest("high", count=40))
    assert high.sum() / none.sum() == pytest.approx(0.10, abs=0.01)


def test_read_rejects_wrong_shape(tmp_path):
    root = write_dataset(manifest(count=2), tmp_path / "d")
    text = (root / "manifest.txt").read_text().replace("n_bins 24", "n_bins 26")
    (root / "manifest.txt").write_text(text)
    with pytest.raises(ValueError, match="shape"):
        read_dataset(root)
