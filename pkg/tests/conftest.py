import pytest

_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Log one PASS/FAIL/SKIP line per acceptance criterion; the lines are
    repeated in the terminal summary so they survive output capture."""

    def record(number: int, passed: bool | None, detail: str) -> bool | None:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"[{status}] criterion {number}: {detail}"
        print(line)
        _LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
