from __future__ import annotations

import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES: list[str] = []
# Wall time spent building each shared Monte-Carlo fixture.
FIXTURE_SECONDS: dict[str, float] = {}

MC_SEED = 2024


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def _mm_runs(delta: float, n: int):
    from orthospec.model import Model
    from orthospec.montecarlo import run_trials
    from orthospec.trimmers import make_trimmer

    start = time.perf_counter()
    summary = run_trials(Model(make_trimmer("mm", delta), delta), n, 20, MC_SEED)
    FIXTURE_SECONDS[f"mm-{delta:g}-{n}"] = time.perf_counter() - start
    return summary


# The n = 1000 runs take about a minute each, so they are shared between the
# module tests and the acceptance suite.
@pytest.fixture(scope="session")
def mm3_n1000():
    return _mm_runs(3.0, 1000)


@pytest.fixture(scope="session")
def mm3_n500():
    return _mm_runs(3.0, 500)


@pytest.fixture(scope="session")
def mm12_n1000():
    return _mm_runs(1.2, 1000)
