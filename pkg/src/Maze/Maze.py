from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.Config.Config import yaml
from src.Mdp.Mdp import Mdp, RewardVector
from src.utils.logger import get_logger

Cell = Tuple[int, int]

WALL = "#"
FREE = "."
ACTION_NAMES = ("stay", "up", "down", "left", "right")
ACTION_DELTAS = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))
OPPOSITE_ACTION = {0: 0, 1: 2, 2: 1, 3: 4, 4: 3}


class MazeError(ValueError):
    """
    Raised for malformed mazes, reward regions and tasks.
    """


@dataclass(frozen=True)
class MazeSpec:
    """
    Maze geometry: rows of '#' (wall) and '.' (free); free cells are the states.
    """
    grid: Tuple[str, ...]
    discount: float = 0.98

    def __post_init__(self):
        grid = tuple(str(row) for row in self.grid)
        object.__setattr__(self, "grid", grid)
        if len(grid) == 0 or len(grid[0]) == 0:
            raise MazeError("maze grid is empty")
        if any(len(row) != len(grid[0]) for row in grid):
            raise MazeError("maze grid is not rectangular")
        unknown = {c for row in grid for c in row} - {WALL, FREE}
        if unknown:
            raise MazeError(f"unknown cell codes {sorted(unknown)}")
        if not any(FREE in row for row in grid):
            raise MazeError("maze has no free cell")

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.grid), len(self.grid[0])

    def is_free(self, cell: Cell) -> bool:
        row, col = cell
        n_rows, n_cols = self.shape
        return 0 <= row < n_rows and 0 <= col < n_cols and self.grid[row][col] == FREE


@dataclass(frozen=True)
class CellMap:
    """
    Row-major mapping between free cells and dense state indices.
    """
    cells: Tuple[Cell, ...]
    index: Dict[Cell, int] = field(compare=False)

    @classmethod
    def from_spec(cls, spec: MazeSpec) -> "CellMap":
        cells = tuple((r, c) for r, row in enumerate(spec.grid) for c, code in enumerate(row) if code == FREE)
        return cls(cells, {cell: i for i, cell in enumerate(cells)})

    @property
    def n_states(self) -> int:
        return len(self.cells)

    def state(self, cell: Sequence[int]) -> int:
        cell = (int(cell[0]), int(cell[1]))
        if cell not in self.index:
            raise MazeError(f"cell {cell} is not a free cell")
        return self.index[cell]

    def cell(self, state: int) -> Cell:
        return self.cells[int(state)]


@dataclass(frozen=True)
class RewardRegionSpec:
    """
    Reward regions applied in order; later regions overwrite earlier ones on shared cells.
    """
    regions: Tuple[Tuple[Tuple[Cell, ...], float], ...] = ()

    @classmethod
    def from_list(cls, regions: List[dict]) -> "RewardRegionSpec":
        return cls(tuple((tuple((int(r), int(c)) for r, c in region["cells"]), float(region["value"]))
                         for region in regions))


@dataclass(frozen=True)
class Task:
    """
    Evaluation task: reward regions, start cells, optional goal cell and episode length.
    """
    name: str
    reward: RewardRegionSpec
    start_cells: Tuple[Cell, ...]
    goal_cell: Optional[Cell] = None
    episode_length: int = 100

    @property
    def is_goal_task(self) -> bool:
        return self.goal_cell is not None


def build_mdp(spec: MazeSpec) -> Tuple[Mdp, CellMap]:
    """
    Deterministic 5-action maze MDP. Moves into walls or off the grid leave the state unchanged.
    :param spec: Maze geometry.
    :return: (MDP, cell map).
    """
    cell_map = CellMap.from_spec(spec)
    n = cell_map.n_states
    transitions = np.zeros((n, len(ACTION_DELTAS), n))
    for s, (row, col) in enumerate(cell_map.cells):
        for a, (dr, dc) in enumerate(ACTION_DELTAS):
            target = (row + dr, col + dc)
            transitions[s, a, cell_map.index[target] if spec.is_free(target) else s] = 1.0
    get_logger().debug(f"Built maze MDP with {n} states, discount {spec.discount}")
    return Mdp(transitions, spec.discount), cell_map


def reward_vector(spec: RewardRegionSpec, cell_map: CellMap, name: str = "regions") -> RewardVector:
    """
    Per-state reward from regions, zero on unlisted states, last write wins.
    """
    values = np.zeros(cell_map.n_states)
    for cells, value in spec.regions:
        for cell in cells:
            values[cell_map.state(cell)] = value
    return RewardVector(values, name=name)


def goal_task(spec: MazeSpec, g: Cell, start_cells: Sequence[Cell] = None, episode_length: int = 100,
              name: str = None) -> Task:
    """
    Goal-reaching task: indicator reward at g, success means occupying g.
    """
    g = (int(g[0]), int(g[1]))
    if not spec.is_free(g):
        raise MazeError(f"goal cell {g} is not free")
    starts = tuple((int(r), int(c)) for r, c in (start_cells or [g]))
    for cell in starts:
        if not spec.is_free(cell):
            raise MazeError(f"start cell {cell} is not free")
    return Task(
        name=name or f"goal_{g[0]}_{g[1]}",
        reward=RewardRegionSpec((((g,), 1.0),)),
        start_cells=starts,
        goal_cell=g,
        episode_length=int(episode_length),
    )


def shortest_path_length(spec: MazeSpec, start: Cell, goal: Cell) -> Optional[int]:
    """
    BFS distance in moves between two free cells, None when disconnected.
    """
    start, goal = tuple(start), tuple(goal)
    if not spec.is_free(start) or not spec.is_free(goal):
        raise MazeError("shortest path endpoints must be free cells")
    distances = {start: 0}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            return distances[cell]
        for dr, dc in ACTION_DELTAS[1:]:
            target = (cell[0] + dr, cell[1] + dc)
            if spec.is_free(target) and target not in distances:
                distances[target] = distances[cell] + 1
                queue.append(target)
    return None


class MazeEnv:
    """
    Sampling interface over a maze MDP, used by rollouts.
    """
    def __init__(self, spec: MazeSpec):
        self.spec = spec
        self.mdp, self.cell_map = build_mdp(spec)
        self.cumulative = np.cumsum(self.mdp.transitions, axis=2)

    @property
    def n_states(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    def step(self, s: int, a: int, rng: np.random.Generator) -> int:
        """
        Sample s' ~ P[s][a].
        """
        row = self.cumulative[int(s), int(a)]
        return int(min(np.searchsorted(row, rng.random() * row[-1], side="right"), self.n_states - 1))

    def task_reward(self, task: Task) -> RewardVector:
        return reward_vector(task.reward, self.cell_map, name=task.name)

    def start_states(self, task: Task) -> List[int]:
        return [self.cell_map.state(cell) for cell in task.start_cells]


def load_maze_config(path: str) -> Tuple[MazeSpec, List[Task]]:
    """
    Read a maze config (JSON or YAML): grid, discount and tasks.
    Goal tasks without reward regions get the indicator reward of their goal.
    :param path: Config file.
    :return: (maze spec, tasks).
    """
    with open(path, "r") as f:
        data = yaml.load(f)
    try:
        spec = MazeSpec(tuple(data["grid"]), float(data.get("discount", 0.98)))
        tasks = []
        for entry in data.get("tasks", []):
            starts = tuple((int(r), int(c)) for r, c in entry.get("start", []))
            goal = entry.get("goal")
            goal = (int(goal[0]), int(goal[1])) if goal is not None else None
            regions = RewardRegionSpec.from_list(list(entry.get("rewards", [])))
            if goal is not None and not regions.regions:
                regions = RewardRegionSpec((((goal,), 1.0),))
            task = Task(str(entry["name"]), regions, starts, goal, int(entry.get("episode_length", 100)))
            _check_task(spec, task)
            tasks.append(task)
    except (KeyError, TypeError) as e:
        raise MazeError(f"malformed maze config {path}: {e}") from e
    get_logger().debug(f"Loaded maze config {path} with {len(tasks)} tasks")
    return spec, tasks


def _check_task(spec: MazeSpec, task: Task):
    if not task.start_cells:
        raise MazeError(f"task {task.name} has no start cell")
    for cell in task.start_cells:
        if not spec.is_free(cell):
            raise MazeError(f"task {task.name}: start cell {cell} is not free")
    if task.goal_cell is not None and not spec.is_free(task.goal_cell):
        raise MazeError(f"task {task.name}: goal cell {task.goal_cell} is not free")
    for cells, _ in task.reward.regions:
        for cell in cells:
            if not spec.is_free(cell):
                raise MazeError(f"task {task.name}: reward cell {cell} is a wall")
