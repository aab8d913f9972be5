import numpy as np
import pytest
from hypothesis import settings

from qkdcoexist.config import load_config
from qkdcoexist.dataset import generate_campaign
from qkdcoexist.ml import ModelSpec, fit_predictor

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

DEFAULT_SEED = 0


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture(scope="session")
def lab(config):
    return config.fiber("lab")


@pytest.fixture(scope="session")
def quantum(config):
    return config.quantum


@pytest.fixture(scope="session")
def grid(config):
    return config.grid


@pytest.fixture(scope="session")
def bundle(config):
    return generate_campaign(config, DEFAULT_SEED)


@pytest.fixture(scope="session")
def rf_predictor(bundle):
    return fit_predictor(ModelSpec("RF", bootstrap_seed=DEFAULT_SEED), bundle.training)


@pytest.fixture(scope="session")
def kn_predictor(bundle):
    return fit_predictor(ModelSpec("KN"), bundle.training)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
