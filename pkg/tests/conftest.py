import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", default=False,
                     help="rewrite tests/golden from the current CLI output")


@pytest.fixture
def update_golden(request):
    return request.config.getoption("--update-golden")


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one acceptance verdict and fail the test if any check failed."""

    def _record(number, title, checks, detail=""):
        failed = [name for name, ok in checks.items() if not ok]
        ACCEPTANCE[number] = (title, not failed, detail if not failed else "failed: " + ", ".join(failed))
        print(f"ACCEPTANCE {number:2d} {'PASS' if not failed else 'FAIL'}  {title}  {ACCEPTANCE[number][2]}")
        assert not failed, failed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
