"""Collects acceptance-criterion outcomes and prints them after the run."""
from __future__ import annotations

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, float, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, seconds, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {number:>2} {title} ({seconds:.1f} s)"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
