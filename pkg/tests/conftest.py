"""Shared pytest plumbing: collects acceptance-criterion result lines.

test_acceptance.py appends one line per criterion; printing them from the
terminal-summary hook keeps them visible in captured (non -s) runs.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
