import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True, database=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
