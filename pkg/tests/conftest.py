import numpy as np
import pytest

from fedstop.model import Batch, ModelSpec


def random_batch(rng, spec: ModelSpec, n: int) -> Batch:
    X = rng.standard_normal((n, spec.input_dim))
    y = rng.integers(0, spec.num_classes, size=n)
    return Batch(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
