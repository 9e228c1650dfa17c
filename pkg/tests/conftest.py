from __future__ import annotations

import os

import pytest
from hypothesis import settings

from dyadsense.engine import run_engine
from dyadsense.simulator import ScenarioSpec, Segment, generate_dyad_streams

settings.register_profile("ci", deadline=None, derandomize=True)
settings.register_profile("dev", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def short_sim():
    """Calibration plus 80 s aligned and 70 s of attention drift."""
    spec = ScenarioSpec([Segment("aligned", 80), Segment("attention_drift", 70)], seed=7)
    return generate_dyad_streams(spec)


@pytest.fixture(scope="session")
def short_records(short_sim):
    return run_engine(short_sim.messages(), session_id="short")


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance_lines(request):
    return request.config.acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(config.acceptance_lines):
            terminalreporter.write_line(line)
