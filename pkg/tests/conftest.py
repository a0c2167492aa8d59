import os

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


def pytest_report_header(config):
    from srbkit import BACKEND

    return f"srbkit kernel backend: {BACKEND} (SRBKIT_PURE_PYTHON={os.environ.get('SRBKIT_PURE_PYTHON', '')})"
