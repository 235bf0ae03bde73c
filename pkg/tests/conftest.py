import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_spd(rng: np.random.Generator, k: int, scale: float = 1.0, ridge: float = 0.5) -> np.ndarray:
    b = rng.standard_normal((k, k))
    return scale * (b @ b.T / k + ridge * np.eye(k))


def random_forecast_params(rng, k, mean_scale=0.05, vol=0.05):
    mu = mean_scale * rng.standard_normal(k) + 0.01
    sigma = random_spd(rng, k, scale=vol**2)
    return mu, sigma


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
