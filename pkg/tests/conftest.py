import pytest

_LINES = []


@pytest.fixture
def report():
    """Collect one summary line per acceptance criterion."""
    def add(n, ok, detail, seconds, limit):
        in_time = seconds < limit
        status = "PASS" if ok and in_time else "FAIL"
        _LINES.append((n, f"criterion {n:2d}: {status}  {detail}  [{seconds:.1f}s / limit {limit:.0f}s]"))
        return ok and in_time
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
