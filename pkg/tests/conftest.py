import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lossdfl.engine import ExperimentConfig  # noqa: E402


@pytest.fixture
def small_config():
    """Fast 6-client setup: few rounds, low-dimensional synthetic data."""
    return ExperimentConfig(rounds=4, dim=8, spread=2.0, seed=3)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; FAIL unless the test body completes."""
    entry = {"detail": "", "ok": False}
    start = time.perf_counter()
    yield entry
    elapsed = time.perf_counter() - start
    status = "PASS" if entry["ok"] else "FAIL"
    ACCEPTANCE_LINES.append(f"{status}  {request.node.name:<48} {elapsed:7.2f}s  {entry['detail']}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
