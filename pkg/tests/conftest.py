import numpy as np
import pytest

from zakisac.frame import Constellation, GridConfig, default_layout


@pytest.fixture
def grid():
    return GridConfig(M=8, N=16)


@pytest.fixture
def small_grid():
    return GridConfig(M=4, N=8)


@pytest.fixture
def layout(grid):
    return default_layout(grid)


@pytest.fixture
def bpsk():
    return Constellation.make("BPSK")


@pytest.fixture
def qpsk():
    return Constellation.make("QPSK")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES = {}


def report_criterion(number: int, passed: bool, detail: str):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
