import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_mdp_tables(rng, n_states, n_actions):
    reward = rng.standard_normal((n_states, n_actions))
    transition = rng.random((n_states, n_actions, n_states))
    transition /= transition.sum(axis=-1, keepdims=True)
    return reward, transition


def random_stochastic(rng, shape):
    p = rng.random(shape) + 1e-3
    return p / p.sum(axis=-1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
