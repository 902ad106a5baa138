import numpy as np
import pytest

from recallbias.core import RecallBiasSpec
from recallbias.simulation import generate_dataset


@pytest.fixture(scope="session")
def spec12():
    return RecallBiasSpec(0.1, 0.2)


@pytest.fixture(scope="session")
def sim_data(spec12):
    return generate_dataset("cor_cor", 2000, spec12, seed=11)


@pytest.fixture(scope="session")
def small_data(spec12):
    return generate_dataset("cor_cor", 400, spec12, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
