import numpy as np
import pytest

from survmix.simulate import default_config, simulate_cohort


@pytest.fixture(scope="session")
def scenario1_config():
    return default_config(1, n=1000, seed=42)


@pytest.fixture(scope="session")
def scenario1_cohort(scenario1_config):
    return simulate_cohort(scenario1_config)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(7)
