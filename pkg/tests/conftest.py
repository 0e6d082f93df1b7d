import numpy as np
import pytest

from vine_empirica.models import schedule_models

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"CRITERION {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def gaussian4():
    return schedule_models("dvine", "gaussian", rho=0.5, d=4)


@pytest.fixture(scope="session")
def gaussian4_data(gaussian4):
    return gaussian4.sample(600, 7)
