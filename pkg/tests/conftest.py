import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_record():
    """Record one pass/fail line per acceptance criterion and assert on it."""

    def record(number, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture
def acceptance_skip():
    """Record a skipped criterion, then skip the test."""

    def skip(number, name, reason):
        line = f"[SKIP] criterion {number}: {name} ({reason})"
        ACCEPTANCE_LINES.append(line)
        pytest.skip(reason)

    return skip


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
