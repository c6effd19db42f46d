import numpy as np
import pytest

from pitsbicg.pde_core import PDECoefficients
from pitsbicg.verify import tiny_context

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def heat1d():
    """1D heat equation, 5 interior nodes, N = 3, 10 fine steps per slab."""
    return tiny_context(1, 7, 3, PDECoefficients(mu=1.0))


@pytest.fixture
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
