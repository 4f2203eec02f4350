import pytest
from hypothesis import settings

# numba compiles on first call, so per-example deadlines are meaningless
settings.register_profile("booklab", deadline=None)
settings.load_profile("booklab")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; returns ``record(number, passed, detail)``."""

    def record(number, passed: bool, detail: str):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
