import numpy as np
import pytest

from pidtune.plant import default_robots

ACCEPTANCE_LINES = []


@pytest.fixture
def robots():
    return default_robots()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
