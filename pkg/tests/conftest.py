"""Shared pytest configuration."""

from __future__ import annotations

import time
from contextlib import contextmanager

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Context manager that times one acceptance criterion and records its outcome.

    A criterion passes only if its body raises nothing and finishes within
    ``budget`` seconds; the outcome is printed and summarized at the end of
    the session.
    """
    lines = request.config.stash.setdefault(_CRITERIA, {})

    @contextmanager
    def run(number: int, title: str, budget: float | None = None):
        start = time.perf_counter()
        outcome = "FAIL"
        try:
            yield
            elapsed = time.perf_counter() - start
            if budget is None or elapsed < budget:
                outcome = "PASS"
        finally:
            elapsed = time.perf_counter() - start
            limit = "" if budget is None else f" (budget {budget:g} s)"
            line = f"criterion {number:2d} {outcome}  {elapsed:7.2f} s{limit}  {title}"
            lines[number] = line
            print(line)
        assert budget is None or elapsed < budget, f"criterion {number} took {elapsed:.2f} s"

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
