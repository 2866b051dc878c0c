"""Collects acceptance verdicts and prints them once at the end of the run."""

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
