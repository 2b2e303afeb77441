"""Shared test configuration.

Property tests use a moderate example budget so the whole suite stays
fast; the acceptance tests carry the fixed-size randomized batteries.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
