import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_check():
    def record(check):
        lines = [check.line()] + [f"    info: {i}" for i in check.info]
        ACCEPTANCE_LINES.extend(lines)
        print("\n".join(lines))
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
