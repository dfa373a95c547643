import pytest


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture
def record(request):
    """record(number, ok, detail): one PASS/FAIL line per acceptance criterion."""
    lines = request.config._acceptance_lines

    def _record(number, ok, detail):
        lines[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[number])
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config._acceptance_lines
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
