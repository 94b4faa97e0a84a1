import pytest

ACCEPTANCE_LOG: dict[int, str] = {}


@pytest.fixture
def record():
    """Log one pass/fail line per acceptance criterion; the last call per criterion wins."""
    def _record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:>2}: {detail}"
        ACCEPTANCE_LOG[criterion] = line
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LOG):
            terminalreporter.write_line(ACCEPTANCE_LOG[k])
