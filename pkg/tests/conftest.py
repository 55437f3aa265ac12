import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_spd(rng, p, scale=1.0):
    a = rng.normal(size=(p, p))
    return a @ a.T + scale * p * np.eye(p)


def random_symmetric(rng, p):
    a = rng.normal(size=(p, p))
    return (a + a.T) / 2
