"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

ACCEPTANCE = {}


def record(number, passed, detail):
    """Store the outcome of acceptance criterion ``number`` and echo it immediately."""
    line = f"ACCEPTANCE criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
