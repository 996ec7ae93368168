import numpy as np
import pytest

from hdrelay.capacity_solver import PerStateCapacities

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fixed_caps():
    """Fixed channel with A = 2, B = 1."""
    return PerStateCapacities([2.0], [1.0]), np.array([[1.0]])


@pytest.fixture
def onoff_uniform():
    """ON-OFF channel, A = B = 1, all four state pairs equally likely."""
    return PerStateCapacities([0.0, 1.0], [0.0, 1.0]), np.full((2, 2), 0.25)
