import sys

import numpy as np
import pytest

from flrwdust import InitialData, ScaleFactor

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


SCALES = {
    "H1": ScaleFactor.exponential(1.0),
    "H2": ScaleFactor.power(0.9),
    "H3": ScaleFactor.power(0.25),
    "H3half": ScaleFactor.power(0.5),
    "H4": ScaleFactor.power(0.0),
}


@pytest.fixture(params=sorted(SCALES))
def scale(request):
    return SCALES[request.param]


@pytest.fixture
def arctan2():
    return InitialData(2, "-arctan", rho0="gaussian", epsilon=0.1)
