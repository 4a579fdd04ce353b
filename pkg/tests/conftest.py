import numpy as np
import pytest

from noma_v2x.scenario import Scenario, ScenarioConfig


def line_scenario(xs, vxs=None, n_slots=4, r=150.0, pedestrians=()):
    """Users on the x axis; handy for hand-checked geometry."""
    n = len(xs)
    pos = np.column_stack([np.asarray(xs, float), np.zeros(n)])
    vel = np.zeros((n, 2)) if vxs is None else np.column_stack([np.asarray(vxs, float), np.zeros(n)])
    ped = np.zeros(n, dtype=bool)
    ped[list(pedestrians)] = True
    cfg = ScenarioConfig(n_users=n, n_slots=n_slots, comm_range=r, pedestrian_fraction=0.0)
    return Scenario(cfg, pos, vel, ped)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
