import numpy as np
import pytest

from fcs.curves import Grid, WeightParams


@pytest.fixture
def w12() -> WeightParams:
    return WeightParams(1.0, 2.0)


@pytest.fixture
def grid256() -> Grid:
    return Grid.geometric(40.0, 256, 64.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
