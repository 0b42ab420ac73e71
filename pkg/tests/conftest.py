import numpy as np
import pytest

from preftune.domain import Configuration, ParameterSpace, ParameterSpec
from preftune.model import (
    ComparisonDataset,
    ComparisonRecord,
    default_kernel,
    fit_laplace,
    logistic_likelihood,
)


def unit_space(d: int, mode: str = "continuous", points_per_dim: int | None = None) -> ParameterSpace:
    specs = tuple(ParameterSpec(name=f"x{j}", lower=0.0, upper=1.0) for j in range(d))
    return ParameterSpace(specs=specs, mode=mode, points_per_dim=points_per_dim)


def dataset_from_pairs(pairs) -> ComparisonDataset:
    """pairs: iterable of (winner_coords, loser_coords)."""
    ds = ComparisonDataset.empty()
    for win, lose in pairs:
        ds = ds.with_record(
            ComparisonRecord(Configuration(tuple(win)), Configuration(tuple(lose)), "first")
        )
    return ds


def random_dataset(rng: np.random.Generator, d: int, n_records: int, n_points: int | None = None):
    """Random comparisons over a small pool of points, winners chosen at random."""
    n_points = n_points or max(3, n_records // 2 + 2)
    pts = [Configuration.from_array(rng.random(d)) for _ in range(n_points)]
    ds = ComparisonDataset.empty()
    made = 0
    while made < n_records:
        i, j = rng.integers(0, n_points, size=2)
        if i == j:
            continue
        ds = ds.with_record(ComparisonRecord(pts[i], pts[j], "first"))
        made += 1
    return ds


@pytest.fixture
def space2d():
    return unit_space(2)


@pytest.fixture
def small_posterior():
    """Posterior over a handful of 2-D points with a clear winner at (0.7, 0.3)."""
    top = (0.7, 0.3)
    others = [(0.1, 0.1), (0.2, 0.8), (0.9, 0.9), (0.5, 0.6)]
    ds = dataset_from_pairs([(top, o) for o in others])
    ds = ds.with_record(
        ComparisonRecord(Configuration(others[0]), Configuration(others[2]), "first")
    )
    kernel = default_kernel("matern52", 2)
    return fit_laplace(ds, kernel, logistic_likelihood(0.1))
