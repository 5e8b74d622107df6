SCOREBOARD = []


def pytest_terminal_summary(terminalreporter):
    if SCOREBOARD:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in SCOREBOARD:
            terminalreporter.write_line(line)
