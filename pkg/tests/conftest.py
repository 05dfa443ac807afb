"""Shared test wiring: re-emit acceptance verdict lines after the run."""

criterion_lines = []


def pytest_terminal_summary(terminalreporter):
    if not criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in criterion_lines:
        terminalreporter.write_line(line)
