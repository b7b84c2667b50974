import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Register one acceptance line; the summary prints them after the run."""

    def record(number, title, ok, detail, seconds):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append((number, f"criterion {number} {status}  {title}: {detail} ({seconds:.1f} s)"))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
