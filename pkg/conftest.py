import os

import pytest
from hypothesis import HealthCheck, settings

from authority_gate import ActionClass
from state_model import DEFAULT_UNIVERSE, RealState

settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the full-size acceptance sweeps")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size acceptance run (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def universe():
    return DEFAULT_UNIVERSE


@pytest.fixture
def transfer():
    return ActionClass.of({'transfer': ("I", "B", "R", "C", "E")})


@pytest.fixture
def clean_state():
    return RealState.all_valid(DEFAULT_UNIVERSE, at=0)
