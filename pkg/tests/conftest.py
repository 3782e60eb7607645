"""Collects the one-line PASS/FAIL verdicts of the acceptance criteria."""
import pytest

VERDICTS = {}


@pytest.fixture
def verdict():
    """``verdict(number, ok, detail)`` records and prints a criterion line."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[number])
