"""Shared fixtures and the acceptance summary printed at the end of a run."""

import pytest

from slosched.core import TABLE_COEFFICIENTS

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def coeffs():
    return TABLE_COEFFICIENTS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def pytest_runtest_logreport(report):
    # a criterion that errors out before recording still gets its FAIL line
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.when == "call" and report.failed and name.startswith("test_criterion_"):
        k = int(name.split("_")[2])
        ACCEPTANCE_LINES.setdefault(k, f"criterion {k:2d}: FAIL  ({name} raised before reporting)")
