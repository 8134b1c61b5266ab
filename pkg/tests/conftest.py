import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo acceptance verdict lines after the run, outside output capture."""
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None) if mod else None
    if verdicts:
        terminalreporter.ensure_newline()
        terminalreporter.section("acceptance verdicts", sep="-")
        for line in verdicts:
            terminalreporter.write_line(line)
