"""Offline dataset collection and the goal-sampling distributions.

Two collection styles mirror the benchmark protocols: ``navigate`` produces
long trajectories from a noisy expert that re-targets a random free cell on
every arrival, ``stitch`` produces many short segments whose pairwise
temporal span is bounded by construction, so long tasks are only solvable by
composing segments.

Goal sampling mixes four conditionals per transition (s_t in a trajectory
s_0..s_T): the current state itself, a uniform future in-trajectory state
s_k with k ~ U{min(t, T-1), ..., T-1}, a geometric lookahead s_{min(t+k, T-1)}
with k ~ Geom(1 - discount) on {1, 2, ...}, and a uniform state from the
whole dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import maze
from .maze import MazeSpec, Unreachable

__all__ = [
    "Trajectory",
    "Dataset",
    "GoalSampleRatios",
    "GOAL_SOURCES",
    "VALUE_GOAL_RATIOS_DEFAULT",
    "VALUE_GOAL_RATIOS_STITCH",
    "POLICY_GOAL_RATIOS_DEFAULT",
    "expert_action",
    "collect_navigate",
    "collect_stitch",
    "sample_goal",
    "sample_goals",
    "sample_batch",
    "validate_dataset",
    "cell_coverage",
    "trajectory_span",
    "task_covered",
    "write_dataset",
    "read_dataset",
    "dataset_to_text",
    "dataset_from_text",
]

GOAL_SOURCES = ("cur", "traj", "geom", "rand")

VALUE_GOAL_RATIOS_DEFAULT = (0.2, 0.0, 0.5, 0.3)
VALUE_GOAL_RATIOS_STITCH = (0.2, 0.3, 0.0, 0.5)
POLICY_GOAL_RATIOS_DEFAULT = (0.0, 0.5, 0.0, 0.5)


class GoalSampleRatios(NamedTuple):
    cur: float
    traj: float
    geom: float
    rand: float

    def validate(self) -> "GoalSampleRatios":
        if any(r < 0 for r in self):
            raise ValueError(f"goal ratios must be nonnegative, got {tuple(self)}")
        if abs(sum(self) - 1.0) > 1e-9:
            raise ValueError(f"goal ratios must sum to 1, got {tuple(self)}")
        return self


@dataclass
class Trajectory:
    """States s_0..s_T and the T actions between them."""

    states: np.ndarray   # (T+1, state_dim)
    actions: np.ndarray  # (T, action_dim)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise ValueError("trajectory arrays must be matrices")
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("need exactly one more state than actions")

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class Dataset:
    """Trajectory list plus a flat index over every transition."""

    trajectories: list[Trajectory]
    trans_traj: np.ndarray = field(init=False)    # transition -> trajectory id
    trans_step: np.ndarray = field(init=False)    # transition -> step t
    _all_states: np.ndarray = field(init=False)   # concatenated states
    _all_actions: np.ndarray = field(init=False)  # concatenated actions
    _state_offset: np.ndarray = field(init=False) # trajectory -> index of s_0
    _action_offset: np.ndarray = field(init=False)
    _traj_len: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("dataset must contain at least one trajectory")
        lens = np.array([t.length for t in self.trajectories], dtype=np.int64)
        if (lens == 0).any():
            raise ValueError("empty trajectory in dataset")
        self._traj_len = lens
        self._state_offset = np.concatenate([[0], np.cumsum(lens + 1)[:-1]])
        self._action_offset = np.concatenate([[0], np.cumsum(lens)[:-1]])
        self._all_states = np.concatenate([t.states for t in self.trajectories])
        self._all_actions = np.concatenate([t.actions for t in self.trajectories])
        self.trans_traj = np.repeat(np.arange(len(lens)), lens)
        self.trans_step = np.concatenate([np.arange(n) for n in lens])

    @property
    def n_transitions(self) -> int:
        return int(self._traj_len.sum())

    @property
    def state_dim(self) -> int:
        return self.trajectories[0].states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.trajectories[0].actions.shape[1]

    def state_at(self, traj_id: int, t: int) -> np.ndarray:
        return self._all_states[self._state_offset[traj_id] + t]


# ---- expert policy -----------------------------------------------------------


def _next_path_cell(spec: MazeSpec, cur_cell, goal_cell):
    dist = maze.distance_field(spec, goal_cell)
    if dist[cur_cell] < 0:
        raise Unreachable(f"no path between cells {cur_cell} and {goal_cell}")
    d = dist[cur_cell]
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        n = (cur_cell[0] + dr, cur_cell[1] + dc)
        if not spec.walls[n] and dist[n] == d - 1:
            return n
    return cur_cell


def expert_action(spec: MazeSpec, s, g, noise_scale: float,
                  rng: np.random.Generator):
    """Unit step toward the next shortest-path cell center, plus disk noise."""
    cur = maze.cell_of(spec, s)
    goal_cell = maze.cell_of(spec, g)
    if cur == goal_cell:
        target = g
    else:
        target = maze.cell_center(spec, _next_path_cell(spec, cur, goal_cell))
    dx = target[0] - s[0]
    dy = target[1] - s[1]
    norm = math.hypot(dx, dy)
    if norm > 1e-12:
        dx /= norm
        dy /= norm
    else:
        dx = dy = 0.0
    if noise_scale > 0.0:
        angle = rng.random() * 2.0 * math.pi
        radius = noise_scale * math.sqrt(rng.random())
        dx += radius * math.cos(angle)
        dy += radius * math.sin(angle)
    return (min(1.0, max(-1.0, dx)), min(1.0, max(-1.0, dy)))


# ---- collection ----------------------------------------------------------------


def collect_navigate(spec: MazeSpec, n_transitions: int, noise_scale: float,
                     seed: int) -> Dataset:
    """Long trajectories: re-target a random free cell on each arrival."""
    if n_transitions <= 0:
        raise ValueError("n_transitions must be positive")
    rng = np.random.default_rng(seed)
    trajectories = []
    total = 0
    while total < n_transitions:
        s = maze.cell_center(spec, maze.random_free_cell(spec, rng))
        goal = maze.cell_center(spec, maze.random_free_cell(spec, rng))
        states = [s]
        actions = []
        for _ in range(spec.max_episode_steps):
            a = expert_action(spec, s, goal, noise_scale, rng)
            s = maze.step(spec, s, a)
            states.append(s)
            actions.append(a)
            if maze.reward(s, goal, spec.goal_radius)[1]:
                goal = maze.cell_center(spec, maze.random_free_cell(spec, rng))
        trajectories.append(Trajectory(np.array(states), np.array(actions)))
        total += len(actions)
    return Dataset(trajectories)


def collect_stitch(spec: MazeSpec, n_transitions: int, segment_len: int,
                   noise_scale: float, seed: int) -> Dataset:
    """Short segments whose pairwise cell span never exceeds segment_len.

    Each segment targets a goal at BFS distance in [1, segment_len] from a
    random start; the rollout ends on arrival, on budget exhaustion, or just
    before a step that would stretch the visited-cell span past the bound.
    """
    if n_transitions <= 0:
        raise ValueError("n_transitions must be positive")
    if segment_len < 2:
        raise ValueError("segment_len must be at least 2")
    rng = np.random.default_rng(seed)
    budget = 4 * segment_len
    free = spec.free_cells()
    candidate_cache: dict = {}
    trajectories = []
    total = 0
    while total < n_transitions:
        start_cell = free[int(rng.integers(len(free)))]
        candidates = candidate_cache.get(start_cell)
        if candidates is None:
            dist = maze.distance_field(spec, start_cell)
            candidates = [c for c in free if 1 <= dist[c] <= segment_len]
            candidate_cache[start_cell] = candidates
        goal_cell = candidates[int(rng.integers(len(candidates)))]
        goal = maze.cell_center(spec, goal_cell)
        s = maze.cell_center(spec, start_cell)
        states = [s]
        actions = []
        visited = {start_cell}
        span = 0
        for _ in range(budget):
            a = expert_action(spec, s, goal, noise_scale, rng)
            nxt = maze.step(spec, s, a)
            cell = maze.cell_of(spec, nxt)
            if cell not in visited:
                reach = max(int(maze.distance_field(spec, v)[cell]) for v in visited)
                if max(span, reach) > segment_len:
                    break
                span = max(span, reach)
                visited.add(cell)
            s = nxt
            states.append(s)
            actions.append(a)
            if maze.reward(s, goal, spec.goal_radius)[1]:
                break
        if not actions:
            continue
        trajectories.append(Trajectory(np.array(states), np.array(actions)))
        total += len(actions)
    return Dataset(trajectories)


# ---- goal sampling ---------------------------------------------------------------


def sample_goals(dataset: Dataset, traj_ids: np.ndarray, steps: np.ndarray,
                 ratios: GoalSampleRatios, discount: float,
                 rng: np.random.Generator):
    """Vectorized goal draw for a batch of transition indices.

    Returns (goals, sources) where sources indexes into GOAL_SOURCES.
    """
    ratios = GoalSampleRatios(*ratios).validate()
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    n = len(traj_ids)
    lengths = dataset._traj_len[traj_ids]          # T per element
    offsets = dataset._state_offset[traj_ids]
    edges = np.cumsum(ratios)
    source = np.searchsorted(edges, rng.random(n), side="right")
    source = np.minimum(source, 3)
    state_idx = np.empty(n, dtype=np.int64)

    cur = source == 0
    state_idx[cur] = offsets[cur] + steps[cur]

    traj_mask = source == 1
    if traj_mask.any():
        lo = np.minimum(steps[traj_mask], lengths[traj_mask] - 1)
        width = lengths[traj_mask] - lo             # draws k in [lo, T-1]
        k = lo + np.floor(rng.random(int(traj_mask.sum())) * width).astype(np.int64)
        state_idx[traj_mask] = offsets[traj_mask] + k

    geom_mask = source == 2
    if geom_mask.any():
        k = rng.geometric(1.0 - discount, size=int(geom_mask.sum()))
        idx = np.minimum(steps[geom_mask] + k, lengths[geom_mask] - 1)
        state_idx[geom_mask] = offsets[geom_mask] + idx

    rand_mask = source == 3
    if rand_mask.any():
        j = rng.integers(dataset.n_transitions, size=int(rand_mask.sum()))
        state_idx[rand_mask] = (dataset._state_offset[dataset.trans_traj[j]]
                                + dataset.trans_step[j])

    return dataset._all_states[state_idx].copy(), source


def sample_goal(dataset: Dataset, index: tuple[int, int],
                ratios: GoalSampleRatios, discount: float,
                rng: np.random.Generator):
    """Single-transition version; returns (goal state, source tag)."""
    traj_id, t = index
    if not (0 <= traj_id < len(dataset.trajectories)
            and 0 <= t < dataset._traj_len[traj_id]):
        raise IndexError(f"invalid transition index {index}")
    goals, source = sample_goals(dataset, np.array([traj_id]), np.array([t]),
                                 ratios, discount, rng)
    return goals[0], GOAL_SOURCES[int(source[0])]


def sample_batch(dataset: Dataset, batch_size: int,
                 value_ratios: GoalSampleRatios,
                 policy_ratios: GoalSampleRatios,
                 discount: float, subgoal_steps: int, goal_radius: float,
                 rng: np.random.Generator) -> dict:
    """One training batch: transition, goals, subgoal, reward/done mask.

    Rewards and termination are computed against the value goal with the
    success radius applied uniformly, so a goal drawn at the current state
    always yields reward 0 and done.
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    if subgoal_steps < 1:
        raise ValueError("subgoal_steps must be at least 1")
    idx = rng.integers(dataset.n_transitions, size=batch_size)
    traj_ids = dataset.trans_traj[idx]
    steps = dataset.trans_step[idx]
    offsets = dataset._state_offset[traj_ids]
    lengths = dataset._traj_len[traj_ids]

    obs = dataset._all_states[offsets + steps].copy()
    next_obs = dataset._all_states[offsets + steps + 1].copy()
    actions = dataset._all_actions[dataset._action_offset[traj_ids] + steps].copy()

    value_goal, value_src = sample_goals(dataset, traj_ids, steps,
                                         value_ratios, discount, rng)
    policy_goal, policy_src = sample_goals(dataset, traj_ids, steps,
                                           policy_ratios, discount, rng)
    sub_idx = np.minimum(steps + subgoal_steps, lengths - 1)
    subgoal = dataset._all_states[offsets + sub_idx].copy()

    j = rng.integers(dataset.n_transitions, size=batch_size)
    rand_goal = dataset._all_states[
        dataset._state_offset[dataset.trans_traj[j]] + dataset.trans_step[j]].copy()

    dist = np.linalg.norm(obs - value_goal, axis=1)
    done = dist <= goal_radius
    rew = np.where(done, 0.0, -1.0)
    return {
        "obs": obs,
        "action": actions,
        "next_obs": next_obs,
        "value_goal": value_goal,
        "value_goal_src": value_src,
        "reward": rew,
        "done": done.astype(np.float64),
        "policy_goal": policy_goal,
        "policy_goal_src": policy_src,
        "subgoal": subgoal,
        "rand_goal": rand_goal,
    }


# ---- dataset diagnostics ------------------------------------------------------------


def validate_dataset(dataset: Dataset, spec: MazeSpec) -> None:
    """Exhaustive dynamics-consistency check of every stored transition."""
    for k, traj in enumerate(dataset.trajectories):
        for t in range(traj.length):
            s = tuple(traj.states[t])
            if not maze.is_valid_state(spec, s):
                raise ValueError(f"trajectory {k}: state {t} inside a wall")
            nxt = maze.step(spec, s, tuple(traj.actions[t]))
            if nxt != tuple(traj.states[t + 1]):
                raise ValueError(f"trajectory {k}: transition {t} inconsistent "
                                 f"with the maze dynamics")


def _visited_cells(spec: MazeSpec, traj: Trajectory) -> set:
    cols = np.floor(traj.states[:, 0] / spec.cell_size).astype(int)
    rows = np.floor(traj.states[:, 1] / spec.cell_size).astype(int)
    return set(zip(rows.tolist(), cols.tolist()))


def cell_coverage(dataset: Dataset, spec: MazeSpec) -> float:
    """Fraction of free cells visited by any state in the dataset."""
    visited = set()
    for traj in dataset.trajectories:
        visited |= _visited_cells(spec, traj)
    return len(visited) / len(spec.free_cells())


def trajectory_span(spec: MazeSpec, traj: Trajectory) -> int:
    """Largest BFS distance between any two cells visited by one trajectory."""
    cells = sorted(_visited_cells(spec, traj))
    span = 0
    for i, a in enumerate(cells):
        dist = maze.distance_field(spec, a)
        for b in cells[i + 1:]:
            span = max(span, int(dist[b]))
    return span


def task_covered(dataset: Dataset, spec: MazeSpec, task: maze.Task) -> bool:
    """True if one single trajectory visits both the start and goal cells."""
    start_cell = maze.cell_of(spec, task.start)
    goal_cell = maze.cell_of(spec, task.goal)
    for traj in dataset.trajectories:
        cells = _visited_cells(spec, traj)
        if start_cell in cells and goal_cell in cells:
            return True
    return False


# ---- file format -------------------------------------------------------------------


def _fmt_row(row: np.ndarray) -> str:
    return " ".join(f"{x:.17g}" for x in row)


def dataset_to_text(dataset: Dataset) -> str:
    lines = [f"GCRL-DSET v1 {dataset.state_dim} {dataset.action_dim} "
             f"{len(dataset.trajectories)}"]
    for traj in dataset.trajectories:
        lines.append(f"T {traj.length}")
        for t in range(traj.length):
            lines.append(_fmt_row(traj.states[t]))
            lines.append(_fmt_row(traj.actions[t]))
        lines.append(_fmt_row(traj.states[-1]))
    return "\n".join(lines) + "\n"


def dataset_from_text(text: str) -> Dataset:
    lines = text.strip().split("\n")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "GCRL-DSET" or head[1] != "v1":
        raise ValueError("bad dataset header")
    state_dim, action_dim, n_traj = int(head[2]), int(head[3]), int(head[4])
    pos = 1
    trajectories = []
    for _ in range(n_traj):
        marker = lines[pos].split()
        if marker[0] != "T":
            raise ValueError(f"expected trajectory marker at line {pos + 1}")
        length = int(marker[1])
        pos += 1
        states = np.empty((length + 1, state_dim))
        actions = np.empty((length, action_dim))
        for t in range(length):
            states[t] = [float(x) for x in lines[pos].split()]
            actions[t] = [float(x) for x in lines[pos + 1].split()]
            pos += 2
        states[length] = [float(x) for x in lines[pos].split()]
        pos += 1
        trajectories.append(Trajectory(states, actions))
    return Dataset(trajectories)


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(dataset_to_text(dataset))


def read_dataset(path) -> Dataset:
    with open(path) as fh:
        return dataset_from_text(fh.read())
