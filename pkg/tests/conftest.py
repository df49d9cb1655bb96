import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance_report():
    """Record the one-line verdict of an acceptance criterion."""

    def record(criterion: int, passed: bool, detail: str):
        line = f"CRITERION {criterion:>2}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES[criterion] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
