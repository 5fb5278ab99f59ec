import numpy as np
import pytest

from excited_nls.grid import RadialGrid
from excited_nls.linearization import build_pencil
from excited_nls.modulation import ThresholdConfig
from excited_nls.potential import PotentialSpec
from excited_nls.solitons import excited_soliton

# dynamics resolution used throughout: 1024 points on r <= 30, Gaussian well, omega = 100
DYN_GRID = (1024, 30.0)
OMEGA = 100.0


@pytest.fixture(scope="session")
def grid():
    return RadialGrid(*DYN_GRID)


@pytest.fixture(scope="session")
def potential():
    return PotentialSpec.gaussian()


@pytest.fixture(scope="session")
def sol(grid, potential):
    return excited_soliton(OMEGA, potential, grid)


@pytest.fixture(scope="session")
def pencil(sol):
    return build_pencil(sol)


@pytest.fixture(scope="session")
def cfg():
    return ThresholdConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
