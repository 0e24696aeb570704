import numpy as np
import pytest
from scipy import stats

from spectlab.noise import (
    CountCalibration,
    NoiseLevel,
    apply_poisson,
    expected_counts,
    poisson_sample,
)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(2024))


def test_levels():
    assert [NoiseLevel.named(k).scale for k in ("low", "medium", "high")] == [0.9, 0.5, 0.1]
    assert NoiseLevel.named("med").name == "medium"
    with pytest.raises(ValueError):
        NoiseLevel.named("extreme")
    with pytest.raises(ValueError):
        NoiseLevel("x", 0.0)
    with pytest.raises(ValueError):
        CountCalibration(0)


def test_zero_mean_gives_zero(rng):
    assert not poisson_sample(np.zeros(1000), rng).any()


def test_rejects_bad_means(rng):
    for bad in (-1.0, np.nan, np.inf):
        with pytest.raises(ValueError):
            poisson_sample(np.array([1.0, bad]), rng)


def test_mean_at_five(rng):
    draws = poisson_sample(np.full(10_000, 5.0), rng)
    assert abs(draws.mean() - 5) <= 3 * np.sqrt(5 / 10_000)


@pytest.mark.parametrize("lam", [0.5, 5.0, 50.0])
def test_variance_equals_mean(rng, lam):
    draws = poisson_sample(np.full(100_000, lam), rng)
    assert 0.95 <= draws.var() / draws.mean() <= 1.05


@pytest.mark.parametrize("lam", [3.0, 12.0])
def test_goodness_of_fit(rng, lam):
    draws = poisson_sample(np.full(100_000, lam), rng)
    top = int(lam + 6 * np.sqrt(lam))
    observed = np.bincount(np.minimum(draws, top + 1), minlength=top + 2)
    pmf = stats.poisson.pmf(np.arange(top + 1), lam)
    expected = np.append(pmf, 1 - pmf.sum()) * draws.size
    keep = expected >= 5
    observed = np.append(observed[keep], observed[~keep].sum())
    expected = np.append(expected[keep], expected[~keep].sum())
    assert stats.chisquare(observed, expected).pvalue > 0.001


def test_large_mean(rng):
    draws = poisson_sample(np.full(100_000, 100.0), rng)
    assert draws.mean() == pytest.approx(100, rel=0.01)


def test_scalar_input(rng):
    assert poisson_sample(0.0, rng) == 0
    assert poisson_sample(7.0, rng).shape == ()


def sinogram():
    s = np.zeros((16, 24))
    s[:, 6:18] = np.hanning(12) * 3
    return s


def test_zero_bins_stay_zero():
    noisy = apply_poisson(sinogram(), NoiseLevel.named("low"), CountCalibration(1e5), 3)
    assert not noisy[:, :6].any() and not noisy[:, 18:].any()


def test_all_zero_sinogram_rejected():
    with pytest.raises(ValueError):
        apply_poisson(np.zeros((4, 4)), NoiseLevel.named("low"), CountCalibration(), 0)


def test_determinism():
    args = (sinogram(), NoiseLevel.named("medium"), CountCalibration(5e4))
    assert np.array_equal(apply_poisson(*args, 11), apply_poisson(*args, 11))
    assert not np.array_equal(apply_poisson(*args, 11), apply_poisson(*args, 12))


@pytest.mark.parametrize("name", ["low", "medium", "high"])
def test_expected_total_counts(name):
    level, cal = NoiseLevel.named(name), CountCalibration(2e4)
    totals = np.array([apply_poisson(sinogram(), level, cal, seed).sum() for seed in range(200)])
    target = level.scale * cal.total_counts
    assert expected_counts(sinogram(), level.scale, cal).sum() == pytest.approx(target)
    assert abs(totals.mean() - target) <= 3 * totals.std(ddof=1) / np.sqrt(totals.size)


def test_snr_monotone_in_level():
    base, cal = sinogram(), CountCalibration(1e4)
    snr = {}
    for name in ("low", "high"):
        draws = np.stack([apply_poisson(base, NoiseLevel.named(name), cal, s) for s in range(300)])
        centre = draws[:, :, 12]
        snr[name] = np.mean(centre.mean(axis=0) / centre.std(axis=0))
    assert snr["low"] > snr["high"]
