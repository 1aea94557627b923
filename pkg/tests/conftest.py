import numpy as np
import pytest
from hypothesis import settings

from qmle.models import PAPER_FAMILY, PAPER_THETA
from qmle.quantize import QuantizerBank

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

PAPER_THRESHOLDS = (25.0, 20.0, 15.0, 10.0)


@pytest.fixture
def family():
    return PAPER_FAMILY


@pytest.fixture
def theta_star():
    return PAPER_THETA


@pytest.fixture
def paper_banks():
    return tuple(QuantizerBank((t, t)) for t in PAPER_THRESHOLDS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(criterion: str, passed: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
