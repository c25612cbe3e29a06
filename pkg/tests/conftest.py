import warnings

import pytest
from mpmath import mp

from phiorder.errors import ParameterRangeWarning
from phiorder import scales as S


@pytest.fixture(autouse=True)
def _precision():
    old = mp.prec
    mp.prec = 256
    yield
    mp.prec = old


def builtin_phi(kind, param):
    """Builtin scale with the out-of-range warning (log r itself) silenced."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ParameterRangeWarning)
        return S.make_builtin_phi(kind, param)


@pytest.fixture(scope="session")
def log_phi():
    return builtin_phi("log_power", 1)


@pytest.fixture(scope="session")
def square_s():
    return S.make_builtin_s("power", 2)


@pytest.fixture(scope="session")
def two_r():
    return S.make_builtin_s("linear", 2)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
