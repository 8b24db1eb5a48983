import numpy as np
import pytest

from spcm.cli import BlobSpec, default_centers, generate_blobs


def make_noise_benchmark(seed: int):
    """Three unit-triangle blobs (50 points each, sigma 0.1) plus 10% noise."""
    spec = BlobSpec(
        centers=default_centers(3),
        points_per_blob=50,
        sigma=0.1,
        noise_fraction=0.1,
    )
    return generate_blobs(spec, seed=seed)


@pytest.fixture(scope="session")
def blob_benchmark():
    X, labels = make_noise_benchmark(seed=0)
    return X, labels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
