import numpy as np
import pytest

import criteria


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def pytest_terminal_summary(terminalreporter):
    if criteria.LINES:
        terminalreporter.section("acceptance criteria")
        for line in criteria.LINES:
            terminalreporter.write_line(line)
