import numpy as np
import pytest

from lbtransport.catalog import friedrichs_model, random_ensemble

_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def friedrichs():
    return friedrichs_model()


@pytest.fixture(scope="session")
def ensemble():
    return random_ensemble()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance verdicts: ``acceptance(n, ok, detail)``."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
