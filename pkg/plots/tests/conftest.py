import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the figure-package acceptance verdicts after the run."""
    mod = sys.modules.get("test_plot_acceptance")
    verdicts = getattr(mod, "VERDICTS", None) if mod else None
    if verdicts:
        terminalreporter.ensure_newline()
        terminalreporter.section("figure acceptance verdicts", sep="-")
        for line in verdicts:
            terminalreporter.write_line(line)
