import numpy as np
import pytest
from hypothesis import settings
from scipy.spatial.transform import Rotation

# Numeric property tests routinely blow the default deadline on first-run
# JIT-less numpy; disable it globally.
settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix, independent of the library under test."""
    return Rotation.random(random_state=rng).as_matrix()


def random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)
