import numpy as np
import pytest

from plmodica.grid import Grid

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    def log(tag, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {tag}: {detail}")

    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def periodic_line():
    return Grid.from_extent([(0.0, 2 * np.pi)], 2 * np.pi / 128, "periodic")


@pytest.fixture
def wave_line():
    return Grid.from_extent([(-10.0, 10.0)], 10 / 256)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
