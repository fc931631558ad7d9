import pytest

CRITERIA_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""
    def add(line):
        CRITERIA_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
