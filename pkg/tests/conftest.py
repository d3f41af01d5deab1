import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# One deterministic profile for the whole suite: statistical assertions below
# rely on fixed seeds, so hypothesis shrinking noise should not leak in.
settings.register_profile(
    "suite",
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240817))
