import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20250817)


def random_dataset(rng, n, rows, max_arity=3):
    """Uniform random dataset with per-variable arities in {2..max_arity}."""
    from exactbn.dataset import Dataset

    arities = rng.integers(2, max_arity + 1, size=n)
    cells = rng.integers(0, arities, size=(rows, n))
    return Dataset.from_array(cells, arities=arities)
