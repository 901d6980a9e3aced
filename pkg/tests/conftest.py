import numpy as np
import pytest

from be_stability_lab.measure import Interval, build_grid_measure, gaussian, quartic
from be_stability_lab.transport import gaussian_reference

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def gamma():
    return gaussian_reference()


@pytest.fixture(scope="session")
def gamma_fine():
    """Standard Gaussian on a wide, fine grid for tilt-sensitive checks."""
    return build_grid_measure(gaussian(), Interval(-12.0, 12.0, 12001))


@pytest.fixture(scope="session")
def n09():
    return build_grid_measure(gaussian(0.9))


@pytest.fixture(scope="session")
def quartic01():
    return build_grid_measure(quartic(0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
