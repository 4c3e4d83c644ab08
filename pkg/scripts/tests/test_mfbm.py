import numpy as np
import pytest

from src.model.mfbm import (
    HurstParam,
    increment_covariance,
    mfbm_covariance,
    sample_increments,
    sample_paths,
    split_seed,
)
from src.utils.errors import DomainError
from src.utils.numerics import TimeGrid


def test_hurst_domain():
    assert HurstParam(0.7).value == 0.7
    assert HurstParam(0.3).rough
    with pytest.raises(DomainError, match="H must differ from 1/2"):
        HurstParam(0.5)
    with pytest.raises(DomainError):
        HurstParam(1.0)


def test_covariance_values():
    assert mfbm_covariance(0.0, 3.0, 0.3) == 0.0
    assert mfbm_covariance(1.0, 1.0, 0.7) == pytest.approx(2.0)
    assert mfbm_covariance(1.0, 2.0, 0.7) == pytest.approx(1.0 + 2.0**0.4, abs=1e-12)
    assert mfbm_covariance(1.0, 2.0, 0.7) == pytest.approx(2.3195, abs=1e-4)
    with pytest.raises(DomainError):
        mfbm_covariance(-1.0, 1.0, 0.7)


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_increment_covariance(H):
    grid = TimeGrid(1.0, 64)
    cov = increment_covariance(grid, H)
    np.testing.assert_allclose(np.diag(cov), grid.dt + grid.dt ** (2 * H), rtol=1e-14)
    # summing all increments gives xi_1
    assert cov.sum() == pytest.approx(mfbm_covariance(1.0, 1.0, H), rel=1e-10)


def test_same_seed_same_increments():
    grid = TimeGrid(1.0, 64)
    a = sample_paths(grid, 0.7, 1, seed=11)[0]
    b = sample_paths(grid, 0.7, 1, seed=11)[0]
    np.testing.assert_array_equal(a.increments, b.increments)
    assert a.values[0] == 0.0


def test_split_seed_distinct():
    seeds = {split_seed(42, j) for j in range(1000)}
    assert len(seeds) == 1000


def test_paths_do_not_depend_on_batch():
    grid = TimeGrid(1.0, 32)
    seeds = [split_seed(3, j) for j in range(5)]
    batch = sample_increments(grid, 0.3, seeds)
    single = sample_increments(grid, 0.3, seeds[2:3])
    np.testing.assert_allclose(batch[2], single[0], rtol=1e-13, atol=1e-15)


def test_variance_h07():
    grid = TimeGrid(1.0, 64)
    seeds = [split_seed(2024, j) for j in range(20000)]
    xi_1 = sample_increments(grid, 0.7, seeds).sum(axis=1)
    assert np.var(xi_1, ddof=1) == pytest.approx(2.0, rel=0.05)


def test_covariance_h03():
    grid = TimeGrid(1.0, 64)
    seeds = [split_seed(77, j) for j in range(20000)]
    paths = np.cumsum(sample_increments(grid, 0.3, seeds), axis=1)
    half, one = paths[:, 31], paths[:, 63]
    empirical = np.mean(half * one)
    assert empirical == pytest.approx(mfbm_covariance(0.5, 1.0, 0.3), rel=0.05)
