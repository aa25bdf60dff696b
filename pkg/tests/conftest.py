"""Shared fixtures and small random-instance builders."""

import numpy as np
import pytest

from gmmaccel import MixtureModel, WeightedDataset


def random_spd(rng, d, scale=1.0):
    """Well-conditioned random SPD matrix."""
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T + d * np.eye(d))


def random_model(rng, k, d, spread=3.0):
    weights = rng.uniform(0.5, 1.5, size=k)
    weights /= weights.sum()
    means = rng.uniform(-spread, spread, size=(k, d))
    covs = np.stack([random_spd(rng, d, scale=0.5) for _ in range(k)])
    return MixtureModel(weights, means, covs)


def random_dataset(rng, n, d, weighted=True):
    points = rng.standard_normal((n, d)) * 2.0 + rng.uniform(-1, 1, size=d)
    weights = rng.uniform(0.2, 3.0, size=n) if weighted else None
    return WeightedDataset.from_points(points, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
