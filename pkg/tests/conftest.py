import json
from contextlib import contextmanager

import numpy as np
import pytest

from libreparam.dists import BetaParams, GammaParams
from libreparam.models import beta_bernoulli_toy, gamma_poisson_toy
from libreparam.randkit import RngState


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long end-to-end checks")


@contextmanager
def does_not_raise():
    yield


@pytest.fixture(scope="function")
def rng():
    return RngState.from_seed(20160917)


@pytest.fixture(scope="module")
def poisson_counts():
    return np.array([1.0, 0.0, 2.0, 1.0, 1.0])


@pytest.fixture(scope="function")
def gamma_toy(poisson_counts):
    return gamma_poisson_toy(poisson_counts, GammaParams(shape=1.0, rate=1.0))


@pytest.fixture(scope="function")
def beta_toy():
    return beta_bernoulli_toy(np.array([1.0, 0.0, 1.0, 1.0, 0.0, 1.0]), BetaParams(alpha=2.0, beta=2.0))


@pytest.fixture(scope="function")
def create_config_json(tmp_path):
    def _create_config_json(content, filename="config.json"):
        full_path = tmp_path / filename
        if not isinstance(content, str):
            content = json.dumps(content)
        full_path.write_text(content)
        return str(full_path)

    return _create_config_json


@pytest.fixture(scope="function")
def create_data_file(tmp_path):
    def _create_data_file(content, filename="data.csv"):
        full_path = tmp_path / filename
        full_path.write_text(content)
        return str(full_path)

    return _create_data_file


@pytest.fixture(scope="function")
def output_dir(tmp_path):
    return str(tmp_path / "output")
