import pytest

_LINES = {}


@pytest.fixture
def criterion_line():
    """Record the one-line verdict of an acceptance criterion."""
    def record(num, ok, text):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'} | {text}"
        print(line)
        _LINES[num] = line
        return line
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_LINES):
            terminalreporter.write_line(_LINES[num])
