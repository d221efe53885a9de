"""Shared fixtures: bundled-scenario trajectories computed once per session."""
from __future__ import annotations

import time

import pytest

from mcflab import flow
from mcflab.scenarios import load_scenario

SINGULAR = ("circle", "sphere", "dumbbell")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


class _Runs:
    """Lazy cache of bundled-scenario flows and their wall times."""

    def __init__(self):
        self._traj = {}
        self.elapsed = {}

    def __call__(self, name):
        if name not in self._traj:
            spec = load_scenario(name)
            t0 = time.perf_counter()
            self._traj[name] = flow.run(spec.flow_config())
            self.elapsed[name] = time.perf_counter() - t0
        return self._traj[name]


@pytest.fixture(scope="session")
def runs():
    return _Runs()


@pytest.fixture(scope="session")
def specs():
    return load_scenario


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
