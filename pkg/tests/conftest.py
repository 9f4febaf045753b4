import numpy as np
import pytest

from c1alpha.corrugation import default_table


@pytest.fixture(scope="session")
def table():
    return default_table(1.0)


@pytest.fixture(scope="session")
def wide_table():
    return default_table(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one "PASS/FAIL criterion N: ..." line per acceptance criterion, filled by test_acceptance
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
