"""
 Copyright Duel 2025
"""
import numpy as np
import pytest

from src.explain.otsu import otsu_mask, otsu_threshold
from src.utilities.errors import DomainError


def test_bimodal_grid_splits_between_modes():
    rng = np.random.default_rng(0)
    values = np.concatenate((rng.normal(0.1, 0.02, 500), rng.normal(0.8, 0.02, 100)))
    threshold, mask = otsu_mask(values)
    assert values[:500].max() < threshold <= values[500:].min()
    assert mask.sum() == 100


def test_two_level_grid():
    grid = np.zeros((8, 8))
    grid[2:4, 2:4] = 3.0
    threshold, mask = otsu_mask(grid)
    assert 0.0 < threshold <= 3.0
    assert np.array_equal(mask, grid > 0)


def test_constant_grid():
    assert otsu_threshold(np.full((3, 3), 0.4)) == 0.4
    _, mask = otsu_mask(np.full((3, 3), 0.4))
    assert not mask.any()


@pytest.mark.parametrize("values", [np.array([]), np.array([0.0, np.inf]), np.array([np.nan, 1.0])])
def test_invalid_grids(values):
    with pytest.raises(DomainError):
        otsu_threshold(values)


def _exhaustive_splits(values, bins=256):
    counts, edges = np.histogram(values, bins=bins, range=(values.min(), values.max()))
    p = counts / counts.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    between = np.zeros(bins - 1)
    for k in range(bins - 1):
        w0, w1 = p[:k + 1].sum(), p[k + 1:].sum()
        if w0 == 0 or w1 == 0:
            continue
        mu0 = (p[:k + 1] * centers[:k + 1]).sum() / w0
        mu1 = (p[k + 1:] * centers[k + 1:]).sum() / w1
        between[k] = w0 * w1 * (mu0 - mu1) ** 2
    return between, edges


@pytest.mark.parametrize("seed", range(10))
def test_threshold_is_the_exhaustive_maximiser(seed):
    rng = np.random.default_rng(seed)
    values = np.concatenate([rng.normal(0.2, 0.05, size=300), rng.normal(0.7, 0.1, size=int(rng.integers(20, 300)))])
    between, edges = _exhaustive_splits(values)
    # first split within rounding of the maximum; equal variances tie to the lower split
    best = np.flatnonzero(between >= between.max() * (1 - 1e-12))[0]
    assert otsu_threshold(values) == float(edges[best + 1])
