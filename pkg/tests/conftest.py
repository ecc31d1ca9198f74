import numpy as np
import pytest

from vkdpc.analytic import AnalyticVelocityModel
from vkdpc.learning import fit_from_dataset
from vkdpc.plant import ExcitationConfig, PendulumParams, collect_dataset, generate_excitation


@pytest.fixture(scope="session")
def params():
    return PendulumParams()


@pytest.fixture(scope="session")
def analytic_model(params):
    return AnalyticVelocityModel(params)


@pytest.fixture(scope="session")
def train500(params):
    u = generate_excitation(ExcitationConfig(), 500, seed=0)
    return collect_dataset(params, u)


@pytest.fixture(scope="session")
def model500(train500):
    return fit_from_dataset(train500)


@pytest.fixture(scope="session")
def test500(params):
    u = generate_excitation(ExcitationConfig(), 500, seed=1)
    return collect_dataset(params, u)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
