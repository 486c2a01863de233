"""Terminal reporter hook for the bindings acceptance line."""

from __future__ import annotations

import bindings_report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    bindings_report.render(terminalreporter)
