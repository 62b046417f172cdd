import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def random_points(rng):
    from rdnovelty.lof import PointSet

    vectors = rng.normal(size=(200, 10))
    ids = tuple(f"r{i:03d}" for i in range(200))
    return PointSet(ids=ids, vectors=vectors)
