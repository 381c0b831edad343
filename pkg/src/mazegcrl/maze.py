"""Deterministic 2D point-mass maze environments plus an exact temporal-distance oracle.

Geometry: the world is a grid of unit-square cells; a continuous position
(x, y) lies in cell (row, col) = (floor(y / cell), floor(x / cell)). The
border of every layout is wall, free cells form a single connected
component, and the builtin layouts ship five canonical start/goal tasks.

Dynamics are a clipped point mass: each axis of the scaled displacement is
applied in turn and reverted if it would enter a wall cell, so corner
tunneling is impossible and Euclidean-close states on opposite sides of a
wall stay dynamically far apart.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "MazeError",
    "Unreachable",
    "State",
    "Action",
    "Task",
    "MazeSpec",
    "builtin_layout",
    "LAYOUT_NAMES",
    "step",
    "reward",
    "bfs_distance",
    "distance_field",
    "shortest_cell_path",
    "optimal_trajectory",
    "cell_of",
    "cell_center",
    "is_valid_state",
    "random_free_cell",
    "grid_to_text",
    "text_to_grid",
    "tasks_to_text",
    "text_to_tasks",
    "spec_to_text",
    "spec_from_text",
]

State = tuple[float, float]   # (x, y) in length units
Action = tuple[float, float]  # displacement direction, each axis in [-1, 1]

GOAL_RADIUS_CELLS = 0.5
STEP_LENGTH_CELLS = 0.4
EPISODE_BUDGET_FACTOR = 4


class MazeError(ValueError):
    pass


class Unreachable(MazeError):
    """No free-cell path between the queried states."""


class Task(NamedTuple):
    start: State
    goal: State


@dataclass(frozen=True, eq=False)
class MazeSpec:
    """Immutable wall grid plus the geometry constants derived from it."""

    name: str
    walls: np.ndarray          # bool (H, W); True = wall
    cell_size: float
    max_episode_steps: int
    goal_radius: float         # length units
    tasks: tuple[Task, ...]
    _dist_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=bool)
        object.__setattr__(self, "walls", walls)
        if walls.ndim != 2:
            raise MazeError("wall grid must be a matrix")
        if not (walls[0].all() and walls[-1].all()
                and walls[:, 0].all() and walls[:, -1].all()):
            raise MazeError(f"layout '{self.name}': outer border must be all walls")
        free = int((~walls).sum())
        if free == 0:
            raise MazeError(f"layout '{self.name}': no free cells")
        if self._connected_free_count() != free:
            raise MazeError(f"layout '{self.name}': free cells are not connected")

    def _connected_free_count(self) -> int:
        start = tuple(np.argwhere(~self.walls)[0])
        seen = {start}
        queue = deque([start])
        while queue:
            r, c = queue.popleft()
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                n = (r + dr, c + dc)
                if not self.walls[n] and n not in seen:
                    seen.add(n)
                    queue.append(n)
        return len(seen)

    @property
    def step_length(self) -> float:
        return STEP_LENGTH_CELLS * self.cell_size

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    def free_cells(self) -> list[tuple[int, int]]:
        return [tuple(rc) for rc in np.argwhere(~self.walls)]


def cell_of(spec: MazeSpec, s: State) -> tuple[int, int]:
    return (int(math.floor(s[1] / spec.cell_size)),
            int(math.floor(s[0] / spec.cell_size)))


def cell_center(spec: MazeSpec, cell: tuple[int, int]) -> State:
    r, c = cell
    return ((c + 0.5) * spec.cell_size, (r + 0.5) * spec.cell_size)


def _is_wall_at(spec: MazeSpec, x: float, y: float) -> bool:
    cs = spec.cell_size
    r = int(math.floor(y / cs))
    c = int(math.floor(x / cs))
    h, w = spec.walls.shape
    if r < 0 or r >= h or c < 0 or c >= w:
        return True
    return bool(spec.walls[r, c])


def is_valid_state(spec: MazeSpec, s: State) -> bool:
    return not _is_wall_at(spec, s[0], s[1])


def step(spec: MazeSpec, s: State, a: Action) -> State:
    """Clipped point-mass transition; never yields a wall state.

    The x move is applied first, then the y move is checked against the
    post-x position, so a diagonal move can never cut a corner.
    """
    ax = min(1.0, max(-1.0, a[0]))
    ay = min(1.0, max(-1.0, a[1]))
    x, y = s
    nx = x + spec.step_length * ax
    if _is_wall_at(spec, nx, y):
        nx = x
    ny = y + spec.step_length * ay
    if _is_wall_at(spec, nx, ny):
        ny = y
    return (nx, ny)


def reward(s: State, g: State, radius: float) -> tuple[float, bool]:
    """Sparse goal reward: 0 and done inside the radius, -1 otherwise."""
    if math.hypot(s[0] - g[0], s[1] - g[1]) <= radius:
        return 0.0, True
    return -1.0, False


def _check_free_cell(spec: MazeSpec, cell: tuple[int, int], what: str) -> None:
    h, w = spec.walls.shape
    r, c = cell
    if not (0 <= r < h and 0 <= c < w) or spec.walls[r, c]:
        raise MazeError(f"{what}: cell {cell} is not a free cell")


def distance_field(spec: MazeSpec, source: tuple[int, int]) -> np.ndarray:
    """4-connected BFS hop counts from one cell; -1 marks unreachable."""
    cached = spec._dist_cache.get(source)
    if cached is not None:
        return cached
    _check_free_cell(spec, source, "distance_field")
    dist = np.full(spec.walls.shape, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            n = (r + dr, c + dc)
            if not spec.walls[n] and dist[n] < 0:
                dist[n] = d
                queue.append(n)
    spec._dist_cache[source] = dist
    return dist


def bfs_distance(spec: MazeSpec, s: State, g: State) -> int:
    """Exact cell-hop temporal distance between the cells holding s and g."""
    cs, cg = cell_of(spec, s), cell_of(spec, g)
    _check_free_cell(spec, cs, "bfs_distance")
    _check_free_cell(spec, cg, "bfs_distance")
    d = int(distance_field(spec, cs)[cg])
    if d < 0:
        raise Unreachable(f"no path between cells {cs} and {cg}")
    return d


def shortest_cell_path(spec: MazeSpec, s: State, g: State) -> list[tuple[int, int]]:
    """One BFS-optimal cell path from s's cell to g's cell (deterministic)."""
    start, goal = cell_of(spec, s), cell_of(spec, g)
    dist = distance_field(spec, goal)
    if dist[start] < 0:
        raise Unreachable(f"no path between cells {start} and {goal}")
    path = [start]
    cur = start
    while cur != goal:
        d = dist[cur]
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            n = (cur[0] + dr, cur[1] + dc)
            if not spec.walls[n] and dist[n] == d - 1:
                cur = n
                break
        path.append(cur)
    return path


def optimal_trajectory(spec: MazeSpec, task: Task):
    """Cell-center shortest path ending exactly at the goal state.

    States hop one cell at a time (the reference path for order-consistency
    diagnostics); actions record the unit hop direction and are not meant to
    reproduce the hops under ``step``.
    """
    from .data import Trajectory

    cells = shortest_cell_path(spec, task.start, task.goal)
    if len(cells) == 1:
        return Trajectory(states=np.array([task.goal], dtype=np.float64),
                          actions=np.zeros((0, 2), dtype=np.float64))
    states = [cell_center(spec, c) for c in cells[:-1]] + [task.goal]
    states = np.asarray(states, dtype=np.float64)
    deltas = np.diff(states, axis=0)
    scale = np.maximum(np.abs(deltas).max(axis=1, keepdims=True), 1e-12)
    actions = np.clip(deltas / scale, -1.0, 1.0)
    return Trajectory(states=states, actions=actions)


def random_free_cell(spec: MazeSpec, rng: np.random.Generator) -> tuple[int, int]:
    cells = spec.free_cells()
    return cells[int(rng.integers(len(cells)))]


# ---- builtin layouts ----------------------------------------------------------

_MEDIUM_GRID = """\
##########
#........#
#.######.#
#.#....#.#
#.#.##.#.#
#.#.#..#.#
#...#.##.#
#.###....#
#.....##.#
##########"""

_LARGE_GRID = """\
##############
#......#.....#
#.####.#.###.#
#.#..#.....#.#
#.#.######.#.#
#.#......#.#.#
#.######.#.#.#
#........#.#.#
######.###.#.#
#......#...#.#
#.######.###.#
#.#......#...#
#...######.#.#
##############"""

_GIANT_GRID = """\
######################
#....................#
#....................#
#....................#
#....................#
##################...#
#....................#
#....................#
#....................#
#..###################
#....................#
#....................#
#....................#
##################...#
#....................#
#....................#
#....................#
#..###################
#....................#
#....................#
#....................#
######################"""

# canonical tasks as ((start row, start col), (goal row, goal col)); chosen
# once from the all-pairs BFS table to span short through diameter-length
# goals (giant tasks all require a detour around at least one wall)
_CANONICAL_CELLS = {
    "medium": (((1, 1), (1, 6)), ((1, 2), (3, 6)), ((1, 3), (5, 5)),
               ((2, 8), (6, 5)), ((1, 3), (5, 6))),
    "large": (((1, 1), (1, 12)), ((1, 2), (5, 6)), ((1, 8), (5, 3)),
              ((3, 3), (5, 12)), ((3, 4), (12, 10))),
    "giant": (((1, 1), (6, 9)), ((1, 2), (10, 7)), ((1, 3), (13, 20)),
              ((1, 4), (18, 5)), ((1, 1), (20, 20))),
}

LAYOUT_NAMES = ("medium", "large", "giant")
_GRIDS = {"medium": _MEDIUM_GRID, "large": _LARGE_GRID, "giant": _GIANT_GRID}


def builtin_layout(name: str) -> MazeSpec:
    """Fixed desk-scale layout: medium (8x8), large (12x12), giant (20x20)."""
    if name not in _GRIDS:
        raise MazeError(f"unknown layout '{name}' (choose from {LAYOUT_NAMES})")
    walls = text_to_grid(_GRIDS[name])
    cell = 1.0
    spec = MazeSpec(name=name, walls=walls, cell_size=cell, max_episode_steps=1,
                    goal_radius=GOAL_RADIUS_CELLS * cell, tasks=())
    tasks = []
    for start_cell, goal_cell in _CANONICAL_CELLS[name]:
        tasks.append(Task(cell_center(spec, start_cell), cell_center(spec, goal_cell)))
    longest = max(bfs_distance(spec, t.start, t.goal) for t in tasks)
    return MazeSpec(name=name, walls=walls, cell_size=cell,
                    max_episode_steps=EPISODE_BUDGET_FACTOR * longest,
                    goal_radius=GOAL_RADIUS_CELLS * cell, tasks=tuple(tasks))


# ---- serialization --------------------------------------------------------------


def grid_to_text(walls: np.ndarray) -> str:
    return "\n".join("".join("#" if w else "." for w in row) for row in walls)


def text_to_grid(text: str) -> np.ndarray:
    lines = [line for line in text.strip().split("\n")]
    width = len(lines[0])
    if any(len(line) != width for line in lines):
        raise MazeError("grid rows have inconsistent widths")
    if any(ch not in "#." for line in lines for ch in line):
        raise MazeError("grid may only contain '#' and '.'")
    return np.array([[ch == "#" for ch in line] for line in lines])


def tasks_to_text(tasks: tuple[Task, ...]) -> str:
    return "\n".join(
        f"{t.start[0]:.17g} {t.start[1]:.17g} {t.goal[0]:.17g} {t.goal[1]:.17g}"
        for t in tasks)


def text_to_tasks(text: str) -> tuple[Task, ...]:
    tasks = []
    for line in text.strip().split("\n"):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise MazeError(f"bad task line: {line!r}")
        x0, y0, xg, yg = (float(p) for p in parts)
        tasks.append(Task((x0, y0), (xg, yg)))
    return tuple(tasks)


def spec_to_text(spec: MazeSpec) -> str:
    header = (f"LAYOUT {spec.name} {spec.cell_size:.17g} "
              f"{spec.max_episode_steps} {spec.goal_radius:.17g}")
    return "\n".join([header, grid_to_text(spec.walls), "TASKS",
                      tasks_to_text(spec.tasks)]) + "\n"


def spec_from_text(text: str) -> MazeSpec:
    lines = text.strip().split("\n")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "LAYOUT":
        raise MazeError("bad layout header")
    try:
        marker = lines.index("TASKS")
    except ValueError:
        raise MazeError("missing TASKS section") from None
    walls = text_to_grid("\n".join(lines[1:marker]))
    tasks = text_to_tasks("\n".join(lines[marker + 1:]))
    return MazeSpec(name=head[1], walls=walls, cell_size=float(head[2]),
                    max_episode_steps=int(head[3]), goal_radius=float(head[4]),
                    tasks=tasks)
