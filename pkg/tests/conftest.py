import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def report_line():
    """Record one summary line; all lines are repeated at the end of the run."""

    def record(line: str):
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
