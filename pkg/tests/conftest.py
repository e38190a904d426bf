import numpy as np
import pytest

from kaplansky import MeasureSpace, SGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def space4():
    return MeasureSpace(("a", "b", "c", "d"), (0.5, 1.0, 1.5, 2.0))


@pytest.fixture
def grid3():
    return SGrid((0.1, 0.5, 0.9), (0.25, 0.5, 0.25))



_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Record one status line per acceptance criterion."""
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
