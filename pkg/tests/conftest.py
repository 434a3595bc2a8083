import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lambdarep import env_core as E

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_mdp(rng):
    return E.random_mdp(rng, 5, 3, 0.9)


def chain(n, gamma=0.9, loop_last=True):
    """Deterministic 1-action chain 0 -> 1 -> ... -> n-1 (absorbing)."""
    T = np.zeros((n, 1, n))
    for s in range(n - 1):
        T[s, 0, s + 1] = 1.0
    T[n - 1, 0, n - 1 if loop_last else 0] = 1.0
    return E.TabularMDP(T, gamma)
