"""Evaluation rollouts and value-quality diagnostics.

Rollouts are deterministic: policies act through their means and the
dynamics are deterministic, so trials differ only through a small start
jitter drawn from the caller's RNG. Value quality is scalarized two ways:
Kendall order consistency counts strictly increasing value pairs along a
shortest cell path to the goal, and the temporal-alignment score is the
Spearman rank correlation between the value landscape over free cells and
the negated BFS distance oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import maze
from .data import Trajectory
from .maze import MazeSpec, Task
from .training import LearnerState, policy_mean
from .values import value

__all__ = [
    "EvalReport",
    "LandscapeGrid",
    "act",
    "act_batch",
    "evaluate",
    "kendall_consistency",
    "value_landscape",
    "temporal_alignment",
    "learner_value_fn",
    "report_to_csv",
    "report_from_csv",
    "landscape_to_csv",
    "landscape_from_csv",
]

START_JITTER_CELLS = 0.25


@dataclass
class EvalReport:
    checkpoint_step: int
    task_success: list[float]
    task_kendall: list[float]
    task_alignment: list[float]

    @property
    def aggregate_success(self) -> float:
        return float(np.mean(self.task_success))

    @property
    def mean_kendall(self) -> float:
        return float(np.mean(self.task_kendall))

    @property
    def mean_alignment(self) -> float:
        return float(np.mean(self.task_alignment))


@dataclass
class LandscapeGrid:
    goal: tuple[float, float]
    resolution: int
    grid: np.ndarray         # (H*res, W*res); NaN marks wall sample points
    xs: np.ndarray           # coordinates of the free sample points, row-major
    ys: np.ndarray
    values: np.ndarray


def act_batch(state: LearnerState, s: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Deterministic (mean) actions for a batch of state/goal pairs."""
    s = state.normalize(np.asarray(s, dtype=np.float64))
    g = state.normalize(np.asarray(g, dtype=np.float64))
    if state.config.hierarchical:
        w = policy_mean(state.policies.high, np.concatenate([s, g], axis=1))
        a = policy_mean(state.policies.low, np.concatenate([s, w], axis=1))
    else:
        a = policy_mean(state.policies.low, np.concatenate([s, g], axis=1))
    return np.clip(a, -1.0, 1.0)


def act(state: LearnerState, s, g) -> tuple[float, float]:
    a = act_batch(state, np.asarray(s)[None], np.asarray(g)[None])[0]
    return (float(a[0]), float(a[1]))


def learner_value_fn(state: LearnerState):
    """V(s, g) callable over batches, with the learner's input normalization."""

    def fn(states: np.ndarray, goal) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        goals = np.broadcast_to(np.asarray(goal, dtype=np.float64),
                                states.shape).copy()
        return value(state.arch, state.rep, state.normalize(states),
                     state.normalize(goals))

    return fn


def _jittered_starts(spec: MazeSpec, start, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    jitter = rng.uniform(-START_JITTER_CELLS, START_JITTER_CELLS, size=(n, 2))
    starts = np.asarray(start, dtype=np.float64) + jitter * spec.cell_size
    home = maze.cell_of(spec, start)
    for i in range(n):
        s = (float(starts[i, 0]), float(starts[i, 1]))
        if maze.cell_of(spec, s) != home or not maze.is_valid_state(spec, s):
            starts[i] = start
    return starts


def _rollout_success(actor, spec: MazeSpec, starts: np.ndarray,
                     goal, max_steps: int) -> np.ndarray:
    """Roll every trial forward under actor(positions, goals) -> actions."""
    n = len(starts)
    pos = starts.copy()
    goal_arr = np.broadcast_to(np.asarray(goal, dtype=np.float64), (n, 2)).copy()
    done = np.linalg.norm(pos - goal_arr, axis=1) <= spec.goal_radius
    for _ in range(max_steps):
        if done.all():
            break
        actions = actor(pos, goal_arr)
        for i in range(n):
            if done[i]:
                continue
            pos[i] = maze.step(spec, (pos[i, 0], pos[i, 1]),
                               (actions[i, 0], actions[i, 1]))
        done |= np.linalg.norm(pos - goal_arr, axis=1) <= spec.goal_radius
    return done


def evaluate(state: LearnerState, spec: MazeSpec, tasks: tuple[Task, ...],
             trials_per_task: int, rng: np.random.Generator) -> EvalReport:
    """Success rates plus per-task order-consistency diagnostics."""
    if trials_per_task < 1:
        raise ValueError("trials_per_task must be at least 1")
    value_fn = learner_value_fn(state)
    actor = lambda pos, goals: act_batch(state, pos, goals)
    success, kendall, alignment = [], [], []
    for task in tasks:
        starts = _jittered_starts(spec, task.start, trials_per_task, rng)
        done = _rollout_success(actor, spec, starts, task.goal,
                                spec.max_episode_steps)
        success.append(float(done.mean()))
        reference = maze.optimal_trajectory(spec, task)
        kendall.append(kendall_consistency(value_fn, reference, task.goal))
        alignment.append(temporal_alignment(value_fn, spec, task.goal))
    return EvalReport(checkpoint_step=state.step, task_success=success,
                      task_kendall=kendall, task_alignment=alignment)


def kendall_consistency(value_fn, reference: Trajectory, goal) -> float:
    """Fraction of state pairs along the reference path ordered like time.

    Strict inequality only, so exact ties count against consistency; an
    empty path (start already at the goal) is vacuously consistent.
    """
    states = reference.states
    horizon = len(states) - 1
    if horizon == 0:
        return 1.0
    vals = value_fn(states, goal)
    later_higher = vals[None, :] > vals[:, None]
    count = int(np.triu(later_higher, k=1).sum())
    return 2.0 * count / (horizon * (horizon + 1))


def _free_sample_points(spec: MazeSpec, resolution: int):
    h, w = spec.shape
    sub = (np.arange(resolution) + 0.5) / resolution
    rows, cols = np.where(~spec.walls)
    xs, ys, grid_rows, grid_cols = [], [], [], []
    for r, c in zip(rows, cols):
        for i in range(resolution):
            for j in range(resolution):
                xs.append((c + sub[j]) * spec.cell_size)
                ys.append((r + sub[i]) * spec.cell_size)
                grid_rows.append(r * resolution + i)
                grid_cols.append(c * resolution + j)
    return (np.array(xs), np.array(ys),
            np.array(grid_rows), np.array(grid_cols))


def value_landscape(value_fn, spec: MazeSpec, goal,
                    resolution: int = 1) -> LandscapeGrid:
    """V over a uniform sub-grid of the free cells; walls stay absent."""
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    xs, ys, grid_rows, grid_cols = _free_sample_points(spec, resolution)
    points = np.stack([xs, ys], axis=1)
    vals = value_fn(points, goal)
    if not np.all(np.isfinite(vals)):
        raise ValueError("value landscape contains non-finite entries")
    h, w = spec.shape
    grid = np.full((h * resolution, w * resolution), np.nan)
    grid[grid_rows, grid_cols] = vals
    return LandscapeGrid(goal=(float(goal[0]), float(goal[1])),
                         resolution=resolution, grid=grid,
                         xs=xs, ys=ys, values=vals)


def temporal_alignment(value_fn, spec: MazeSpec, goal) -> float:
    """Spearman correlation of V(cell center, g) with -BFS(cell, goal cell)."""
    cells = spec.free_cells()
    if len(cells) < 2:
        raise ValueError("temporal_alignment needs at least two free cells")
    centers = np.array([maze.cell_center(spec, c) for c in cells])
    vals = value_fn(centers, goal)
    goal_cell = maze.cell_of(spec, goal)
    field = maze.distance_field(spec, goal_cell)
    oracle = -np.array([field[c] for c in cells], dtype=np.float64)
    rho = stats.spearmanr(vals, oracle).statistic
    return float(rho)


# ---- CSV emission -----------------------------------------------------------------


def report_to_csv(reports: list[EvalReport]) -> str:
    lines = ["step,task_id,success_rate,kendall,temporal_alignment"]
    for rep in reports:
        for i, (s, k, a) in enumerate(zip(rep.task_success, rep.task_kendall,
                                          rep.task_alignment)):
            lines.append(f"{rep.checkpoint_step},{i},{s:.17g},{k:.17g},{a:.17g}")
    return "\n".join(lines) + "\n"


def report_from_csv(text: str) -> list[EvalReport]:
    lines = text.strip().split("\n")
    if lines[0] != "step,task_id,success_rate,kendall,temporal_alignment":
        raise ValueError("bad report header")
    by_step: dict[int, EvalReport] = {}
    for line in lines[1:]:
        step_s, task_s, s, k, a = line.split(",")
        rep = by_step.setdefault(int(step_s),
                                 EvalReport(int(step_s), [], [], []))
        assert int(task_s) == len(rep.task_success)
        rep.task_success.append(float(s))
        rep.task_kendall.append(float(k))
        rep.task_alignment.append(float(a))
    return [by_step[k] for k in sorted(by_step)]


def landscape_to_csv(grid: LandscapeGrid) -> str:
    lines = ["x,y,value"]
    for x, y, v in zip(grid.xs, grid.ys, grid.values):
        lines.append(f"{x:.17g},{y:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"


def landscape_from_csv(text: str):
    lines = text.strip().split("\n")
    if lines[0] != "x,y,value":
        raise ValueError("bad landscape header")
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return rows[:, 0], rows[:, 1], rows[:, 2]
