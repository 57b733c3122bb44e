import json
import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.abspath(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from src.Maze.Maze import MazeSpec  # noqa: E402
from src.Mdp.Mdp import Mdp, PolicyTable  # noqa: E402

MEDIUM_MAZE = os.path.join(ROOT, "data", "maze_medium.json")

SMALL_GRID = (
    "#####",
    "#...#",
    "#.#.#",
    "#...#",
    "#####",
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running learning tests, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def two_state_mdp(go_targets, discount=0.5):
    """
    Two states, actions (stay, go); go moves state s to go_targets[s].
    """
    transitions = np.zeros((2, 2, 2))
    for s in range(2):
        transitions[s, 0, s] = 1.0
        transitions[s, 1, go_targets[s]] = 1.0
    return Mdp(transitions, discount)


@pytest.fixture
def two_cycle():
    """
    0 <-> 1 with gamma 0.5, plus the all-stay and all-go policies.
    """
    mdp = two_state_mdp([1, 0])
    return mdp, PolicyTable.deterministic([0, 0], 2, "stay"), PolicyTable.deterministic([1, 1], 2, "go")


@pytest.fixture
def two_chain():
    """
    0 -> 1, state 1 absorbing, gamma 0.5.
    """
    mdp = two_state_mdp([1, 1])
    return mdp, PolicyTable.deterministic([0, 0], 2, "stay"), PolicyTable.deterministic([1, 1], 2, "go")


@pytest.fixture
def small_spec():
    return MazeSpec(SMALL_GRID, 0.9)


@pytest.fixture
def small_maze_config(tmp_path):
    """
    The 8-cell ring maze as a config file with one goal task and one reward task.
    """
    path = tmp_path / "small_maze.json"
    path.write_text(json.dumps({
        "grid": list(SMALL_GRID),
        "discount": 0.9,
        "tasks": [
            {"name": "goal_corner", "start": [[1, 1]], "goal": [3, 3], "episode_length": 12},
            {"name": "regions", "start": [[1, 1]], "episode_length": 12,
             "rewards": [{"cells": [[1, 3]], "value": -1.0}, {"cells": [[3, 1]], "value": 5.0}]},
        ],
    }))
    return str(path)
