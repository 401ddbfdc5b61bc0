import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gaitdetect.synthgen import generate_benchmark  # noqa: E402

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def benchmark():
    return generate_benchmark(14, 9, seed=42)


@pytest.fixture(scope="session")
def small_benchmark():
    return generate_benchmark(3, 3, seed=7, duration_s=20.0)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "acceptance", None)
    if marker is not None:
        _ACCEPTANCE.append((marker, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        report.acceptance = (m.args[0], m.args[1], item.name)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    status = {}
    for (num, title, name), outcome in _ACCEPTANCE:
        prev = status.get((num, title), "passed")
        status[(num, title)] = outcome if prev == "passed" else prev
    for (num, title), outcome in sorted(status.items()):
        word = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:>2} {word}  {title}")
