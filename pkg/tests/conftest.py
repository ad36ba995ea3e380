import dataclasses
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from momrpd.scenario import ScenarioConfig, build_grid_environment, default_scenario_path, load_scenario  # noqa: E402
from momrpd.taskgen import resolve_config  # noqa: E402


@pytest.fixture(scope="session")
def lobby():
    """Shipped lobby scenario with a calibrated deadline window."""
    g, cfg = load_scenario(default_scenario_path())
    return g, resolve_config(g, cfg)


@pytest.fixture(scope="session")
def small_grid():
    """8x8 open grid with a 3x3 social block in the middle."""
    return build_grid_environment(8, 8, social_region=[(3, 3, 5, 5)], blocked=[])


@pytest.fixture
def fixed_cfg():
    return ScenarioConfig(
        robots=1, capacity=4, horizon=100.0, arrival_rate=0.05,
        deadline_window=40.0, penalty_M=400.0, assignment_period=10.0, lns_iterations=200,
    )


def with_robots(cfg, m):
    return dataclasses.replace(cfg, robots=m)
