import numpy as np
import pytest

from twobsde.core import ControlSet, TimeGrid
from twobsde.models import ModelConfig


@pytest.fixture
def example_model():
    return ModelConfig()


@pytest.fixture
def example_controls():
    return ControlSet(0.04, 0.09, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def grid_dt(T, dt):
    return TimeGrid.from_dt(T, dt)
