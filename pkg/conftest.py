import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core import ProductDistribution, SampleMatrix, make_rng, sample_dataset  # noqa: E402


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def tiny_matrix():
    """4 rows, 2 features plus target."""
    return SampleMatrix(np.array([
        [1, 1, 1],
        [1, -1, -1],
        [-1, 1, 1],
        [-1, -1, 1],
    ]))


@pytest.fixture
def uniform_dataset():
    D = ProductDistribution.uniform(11)
    return D, sample_dataset(D, 2000, seed=7)
