"""Shared builders for randomized test data."""

import numpy as np
import pytest

from vprfilter import CalibrationTriplet, FeatureTensor
from vprfilter.pooling import PooledMatrix


def random_pooled(rng, channels, slots=5, scale=1.0):
    return PooledMatrix(rng.standard_normal((channels, slots)) * scale)


def random_triplet(rng, channels, slots=5):
    """Triplet where the query drifted from the reference more than the negative.

    This shape produces multi-step greedy traces: removing a noisy channel
    shrinks the query-reference distance faster than the reference-negative
    distance, so the gap keeps growing for a while.
    """
    reference = rng.standard_normal((channels, slots))
    query = reference + rng.standard_normal((channels, slots)) * rng.uniform(0.5, 2.0)
    negative = reference + rng.standard_normal((channels, slots)) * 0.3
    return CalibrationTriplet(
        query=PooledMatrix(query),
        reference=PooledMatrix(reference),
        negative=PooledMatrix(negative),
    )


def ascending_tensor(height=4, width=4, channels=1):
    """Row-major 1..H*W ramp per channel; channel c is offset by 100*c."""
    base = np.arange(1, height * width + 1, dtype=np.float32).reshape(height, width)
    data = np.stack([base + 100 * c for c in range(channels)], axis=-1)
    return FeatureTensor(data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
