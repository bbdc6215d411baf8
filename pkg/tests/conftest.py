"""Shared fixtures plus a terminal summary for the acceptance suite."""

import numpy as np
import pytest

from greenris import SystemConfig, draw_channels


def desk_config(**overrides):
    """Layout small enough to keep every conic solve in the millisecond range."""
    base = dict(n_tx=4, n_users=3, n_ris=10)
    base.update(overrides)
    return SystemConfig(**base)


def make_channel(seed, cfg):
    return draw_channels(np.random.default_rng(seed), cfg)


@pytest.fixture
def cfg_small():
    return desk_config()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # one PASS/FAIL line per acceptance check, independent of -v/-s capture
    rows = {}
    for status, verdict in (("passed", "PASS"), ("failed", "FAIL"),
                            ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            if status == "passed" and getattr(rep, "when", "call") != "call":
                continue
            name = nodeid.split("::")[-1]
            if verdict == "FAIL" or name not in rows:
                rows[name] = verdict
    if rows:
        terminalreporter.section("acceptance summary")
        for name in sorted(rows):
            terminalreporter.write_line(f"{rows[name]}  {name}")
