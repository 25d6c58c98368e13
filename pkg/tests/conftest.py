"""Collects the acceptance verdicts and prints them after the run."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
