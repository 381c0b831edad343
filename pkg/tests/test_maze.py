"""Maze layouts, clipped point-mass dynamics, and the BFS distance oracle."""

import heapq

import numpy as np
import pytest

from mazegcrl import maze
from mazegcrl.maze import MazeError, MazeSpec, Task, builtin_layout


def corridor_spec(n_cells: int, cell_size: float = 1.0) -> MazeSpec:
    walls = np.ones((3, n_cells + 2), dtype=bool)
    walls[1, 1:n_cells + 1] = False
    return MazeSpec(name="corridor", walls=walls, cell_size=cell_size,
                    max_episode_steps=100,
                    goal_radius=0.5 * cell_size, tasks=())


# ---- layouts -------------------------------------------------------------------


@pytest.mark.parametrize("name", maze.LAYOUT_NAMES)
def test_builtin_layout_invariants(name):
    spec = builtin_layout(name)
    walls = spec.walls
    assert walls[0].all() and walls[-1].all()
    assert walls[:, 0].all() and walls[:, -1].all()
    assert len(spec.tasks) == 5
    for task in spec.tasks:
        assert maze.is_valid_state(spec, task.start)
        assert maze.is_valid_state(spec, task.goal)
        maze.bfs_distance(spec, task.start, task.goal)  # reachable


def test_interior_sizes():
    assert builtin_layout("medium").shape == (10, 10)
    assert builtin_layout("large").shape == (14, 14)
    assert builtin_layout("giant").shape == (22, 22)


def test_giant_longest_task_at_least_3x_medium():
    def longest(name):
        spec = builtin_layout(name)
        return max(maze.bfs_distance(spec, t.start, t.goal) for t in spec.tasks)

    assert longest("giant") >= 3 * longest("medium")


def test_unknown_layout_rejected():
    with pytest.raises(MazeError, match="unknown layout"):
        builtin_layout("tiny")


def test_disconnected_layout_rejected():
    walls = np.ones((5, 5), dtype=bool)
    walls[1, 1] = False
    walls[3, 3] = False
    with pytest.raises(MazeError, match="connected"):
        MazeSpec("split", walls, 1.0, 10, 0.5, ())


def test_missing_border_rejected():
    walls = np.zeros((4, 4), dtype=bool)
    with pytest.raises(MazeError, match="border"):
        MazeSpec("open", walls, 1.0, 10, 0.5, ())


# ---- dynamics ------------------------------------------------------------------


def test_zero_action_is_identity():
    spec = builtin_layout("medium")
    s = spec.tasks[0].start
    assert maze.step(spec, s, (0.0, 0.0)) == s


def test_wall_blocks_one_axis_only():
    spec = corridor_spec(5)
    s = (1.5, 1.2)
    # pushing up into the wall: y reverted, x applied
    nxt = maze.step(spec, s, (1.0, -1.0))
    assert nxt == (1.9, 1.2)
    # pushing left out of the corridor: x reverted
    nxt = maze.step(spec, (1.2, 1.5), (-1.0, 0.0))
    assert nxt == (1.2, 1.5)


def test_open_corridor_moves_exactly_step_length():
    spec = corridor_spec(10, cell_size=0.5)
    assert spec.step_length == pytest.approx(0.2)
    s = (1.25, 0.75)
    nxt = maze.step(spec, s, (1.0, 0.0))
    assert nxt[0] == pytest.approx(1.45, abs=1e-15)
    assert nxt[1] == s[1]


def test_action_components_clamped():
    spec = corridor_spec(10)
    s = (2.5, 1.5)
    nxt = maze.step(spec, s, (5.0, 0.0))
    assert nxt[0] == pytest.approx(2.5 + spec.step_length)


@pytest.mark.parametrize("name", maze.LAYOUT_NAMES)
def test_step_never_enters_wall_fuzz(name):
    spec = builtin_layout(name)
    rng = np.random.default_rng(123)
    n = 1_000_000
    free = np.array(spec.free_cells())
    picks = free[rng.integers(len(free), size=n)]
    offs = rng.uniform(0.001, 0.999, size=(n, 2))
    xs = (picks[:, 1] + offs[:, 0]) * spec.cell_size
    ys = (picks[:, 0] + offs[:, 1]) * spec.cell_size
    acts = rng.uniform(-1.0, 1.0, size=(n, 2))
    out = np.empty((n, 2))
    for i in range(n):
        out[i] = maze.step(spec, (xs[i], ys[i]), (acts[i, 0], acts[i, 1]))
    rows = np.floor(out[:, 1] / spec.cell_size).astype(int)
    cols = np.floor(out[:, 0] / spec.cell_size).astype(int)
    assert not spec.walls[rows, cols].any()


# ---- reward --------------------------------------------------------------------


def test_reward_at_goal():
    assert maze.reward((1.0, 1.0), (1.0, 1.0), 0.5) == (0.0, True)


def test_reward_outside_radius():
    assert maze.reward((0.0, 0.0), (1.0, 0.0), 0.5) == (-1.0, False)


def test_reward_boundary_inclusive():
    assert maze.reward((0.0, 0.0), (0.5, 0.0), 0.5) == (0.0, True)


def test_reward_done_consistency():
    rng = np.random.default_rng(4)
    for _ in range(200):
        s = tuple(rng.uniform(0, 5, 2))
        g = tuple(rng.uniform(0, 5, 2))
        r, done = maze.reward(s, g, 0.5)
        assert done == (r == 0.0)


# ---- BFS oracle ----------------------------------------------------------------


def test_bfs_same_cell_is_zero():
    spec = builtin_layout("medium")
    assert maze.bfs_distance(spec, (1.2, 1.2), (1.8, 1.8)) == 0


def test_bfs_straight_corridor():
    spec = corridor_spec(4)
    assert maze.bfs_distance(spec, (1.5, 1.5), (4.5, 1.5)) == 3


def _dijkstra(walls, src, dst):
    dist = {src: 0}
    heap = [(0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == dst:
            return d
        if d > dist[u]:
            continue
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            v = (u[0] + dr, u[1] + dc)
            if not walls[v]:
                nd = d + 1
                if nd < dist.get(v, 10**9):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
    return -1


def test_bfs_matches_dijkstra_oracle():
    spec = builtin_layout("medium")
    rng = np.random.default_rng(8)
    free = spec.free_cells()
    for _ in range(60):
        a = free[rng.integers(len(free))]
        b = free[rng.integers(len(free))]
        sa, sb = maze.cell_center(spec, a), maze.cell_center(spec, b)
        assert maze.bfs_distance(spec, sa, sb) == _dijkstra(spec.walls, a, b)


def test_bfs_symmetry_and_triangle():
    spec = builtin_layout("large")
    rng = np.random.default_rng(9)
    free = spec.free_cells()
    centers = [maze.cell_center(spec, c) for c in free]
    for _ in range(1000):
        a, b, c = (centers[rng.integers(len(centers))] for _ in range(3))
        dab = maze.bfs_distance(spec, a, b)
        assert dab == maze.bfs_distance(spec, b, a)
        assert maze.bfs_distance(spec, a, c) <= dab + maze.bfs_distance(spec, b, c)


# ---- optimal trajectories --------------------------------------------------------


def test_optimal_trajectory_degenerate_task():
    spec = builtin_layout("medium")
    g = spec.tasks[0].start
    traj = maze.optimal_trajectory(spec, Task(g, g))
    assert traj.length == 0
    assert traj.states.shape == (1, 2)


def test_optimal_trajectory_corridor_length():
    spec = corridor_spec(6)
    task = Task((1.5, 1.5), (6.5, 1.5))
    traj = maze.optimal_trajectory(spec, task)
    assert traj.length == maze.bfs_distance(spec, task.start, task.goal) == 5


@pytest.mark.parametrize("name", maze.LAYOUT_NAMES)
def test_optimal_trajectory_valid_and_monotone(name):
    spec = builtin_layout(name)
    for task in spec.tasks:
        traj = maze.optimal_trajectory(spec, task)
        assert traj.length == maze.bfs_distance(spec, task.start, task.goal)
        cells = [maze.cell_of(spec, tuple(s)) for s in traj.states]
        for a, b in zip(cells, cells[1:]):
            assert abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
        dists = [maze.bfs_distance(spec, tuple(s), task.goal) for s in traj.states]
        assert all(x > y for x, y in zip(dists, dists[1:]))
        assert dists[-1] == 0


# ---- serialization ---------------------------------------------------------------


@pytest.mark.parametrize("name", maze.LAYOUT_NAMES)
def test_grid_text_round_trip(name):
    spec = builtin_layout(name)
    text = maze.grid_to_text(spec.walls)
    assert np.array_equal(maze.text_to_grid(text), spec.walls)
    assert maze.grid_to_text(maze.text_to_grid(text)) == text


def test_tasks_text_round_trip():
    spec = builtin_layout("large")
    text = maze.tasks_to_text(spec.tasks)
    back = maze.text_to_tasks(text)
    assert back == spec.tasks
    assert maze.tasks_to_text(back) == text


@pytest.mark.parametrize("name", maze.LAYOUT_NAMES)
def test_spec_text_round_trip(name):
    spec = builtin_layout(name)
    text = maze.spec_to_text(spec)
    back = maze.spec_from_text(text)
    assert back.name == spec.name
    assert np.array_equal(back.walls, spec.walls)
    assert back.cell_size == spec.cell_size
    assert back.max_episode_steps == spec.max_episode_steps
    assert back.goal_radius == spec.goal_radius
    assert back.tasks == spec.tasks
    assert maze.spec_to_text(back) == text


def test_bad_grid_rejected():
    with pytest.raises(MazeError):
        maze.text_to_grid("##\n#")
    with pytest.raises(MazeError):
        maze.text_to_grid("#x\n##")
