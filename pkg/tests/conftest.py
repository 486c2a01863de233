"""Shared fixtures and the acceptance-summary reporter.

Acceptance tests register their verdicts in acceptance_report;
pytest_terminal_summary prints one PASS/FAIL line per criterion after the
run, visible regardless of output capture.
"""

from __future__ import annotations

import pytest

import hired

import acceptance_report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    acceptance_report.render(terminalreporter)


@pytest.fixture
def small_dump():
    """Tiny deterministic dump: k=4, 2 heads, 4 tokens, layers 0/11/22."""
    return hired.generate_synthetic_dump(
        seed=1, k=4, num_heads=2, tokens_per_partition=4
    )


@pytest.fixture
def small_layout(small_dump):
    return hired.layout_from_grid(
        small_dump.grid, small_dump.patch_grid, small_dump.image_size
    )
