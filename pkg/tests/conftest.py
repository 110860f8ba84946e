import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evopf.scenarios import PRESETS, RunSettings, StudyInputs, run_study, study_spec  # noqa: E402


@pytest.fixture(scope="session")
def inputs():
    return StudyInputs.load("33bus")


_STUDIES = {}
STUDY_SECONDS: dict[str, float] = {}


def desk_study(kind, inputs):
    """Desk-preset study results, computed once per session and shared by all test files."""
    if kind not in _STUDIES:
        t0 = time.perf_counter()
        _STUDIES[kind] = run_study(study_spec(kind, "desk"), inputs, RunSettings.for_preset(PRESETS["desk"]))
        STUDY_SECONDS[kind] = time.perf_counter() - t0
    return _STUDIES[kind]


@pytest.fixture(scope="session")
def charging_study(inputs):
    return desk_study("charging-levels", inputs)


@pytest.fixture(scope="session")
def solar_study(inputs):
    return desk_study("solar-penetration", inputs)


@pytest.fixture(scope="session")
def degradation_study(inputs):
    return desk_study("degradation-cost", inputs)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
