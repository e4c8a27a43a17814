import os

# Allow up to 8 worker threads regardless of detected cores; must be set
# before numba is first imported (the thread-scaling acceptance test
# asks for 8).
os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
import pytest

from occgrid.voxelizer import GridSpec


@pytest.fixture(scope="session")
def waymo_spec() -> GridSpec:
    return GridSpec.waymo()


@pytest.fixture(scope="session")
def small_spec() -> GridSpec:
    """16x16x8 cells of 0.5 m centered on the origin."""
    return GridSpec.from_range((-4.0, -4.0, -2.0), (4.0, 4.0, 2.0), 0.5)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
