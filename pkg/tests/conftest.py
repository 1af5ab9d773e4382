"""Shared test plumbing: the acceptance-criterion scoreboard.

Acceptance tests record one line per criterion; the terminal summary
prints them all so a run always ends with an explicit pass/fail roster.
"""

CRITERION_LINES = []


def record_criterion(number, ok, detail):
    status = "PASS" if ok else "FAIL"
    CRITERION_LINES.append((number, f"criterion {number}: {status} - {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERION_LINES):
        terminalreporter.write_line(line)
