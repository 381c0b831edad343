"""Training losses and the optimization loop.

The value function is trained by an expectile temporal-difference objective
against a slowly updated target copy, optionally augmented with a continuity
penalty that caps value variation across single transitions under random
goals. Policies are extracted by advantage-weighted regression with the
exponential weights normalized by their batch mean; in hierarchical mode a
high-level policy regresses onto the bottleneck representation of a state
``subgoal_steps`` ahead while the low-level policy imitates dataset actions
conditioned on that representation.

Baselines fall out as configurations: (MLP, flat, continuity 0) is the
expectile-TD flat agent, (MLP, hierarchical) its hierarchical counterpart,
and ``objective="bc"`` is goal-conditioned behavior cloning.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as datamod
from .autodiff import (
    AdamState,
    GraphError,
    LiftedMlp,
    MlpParams,
    Node,
    Tape,
    adam_step,
    init_mlp,
    mlp_apply,
    polyak_update,
)
from .maze import MazeSpec
from .values import LiftedValue, ValueArchitecture, make_subgoal_rep, make_value_arch, value

__all__ = [
    "TrainConfig",
    "GaussianPolicy",
    "PolicyPair",
    "LearnerState",
    "init_learner",
    "snapshot",
    "state_tree",
    "load_state_tree",
    "expectile_loss",
    "expectile_weights",
    "awr_weights",
    "td_loss",
    "continuity_loss",
    "continuity_threshold",
    "value_loss",
    "high_policy_loss",
    "low_policy_loss",
    "gcbc_loss",
    "train_step",
    "METRIC_FIELDS",
]

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
ADV_EXP_CLIP = 100.0

METRIC_FIELDS = ("step", "td_loss", "continuity_loss", "high_policy_loss",
                 "low_policy_loss", "v_mean", "delta")


@dataclass
class TrainConfig:
    """Everything one run needs; defaults are the desk-scale reference point."""

    discount: float = 0.99
    expectile: float = 0.9
    continuity_weight: float = 0.0
    high_temp: float = 1.0
    low_temp: float = 3.0
    subgoal_steps: int = 5
    target_rate: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    total_steps: int = 50_000
    value_goal_ratios: tuple = datamod.VALUE_GOAL_RATIOS_DEFAULT
    policy_goal_ratios: tuple = datamod.POLICY_GOAL_RATIOS_DEFAULT
    arch_kind: str = "LAN"
    hierarchical: bool = True
    rep_grad_from_policy: bool = True
    objective: str = "awr"             # "awr" | "bc"
    normalize_inputs: bool = True
    seed: int = 0
    value_hidden: tuple = (64, 64)
    policy_hidden: tuple = (64, 64)
    rep_hidden: tuple = (64,)
    rep_dim: int = 10
    latent_dim: int = 64
    iqe_components: int = 8
    iqe_intervals: int = 8
    mrn_sym_dim: int = 32
    mrn_asym_dim: int = 32

    def validate(self) -> "TrainConfig":
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        if not 0.5 < self.expectile < 1.0:
            raise ValueError("expectile must lie in (0.5, 1)")
        if self.continuity_weight < 0.0:
            raise ValueError("continuity_weight must be nonnegative")
        if self.high_temp <= 0.0 or self.low_temp <= 0.0:
            raise ValueError("AWR temperatures must be positive")
        if self.subgoal_steps < 1:
            raise ValueError("subgoal_steps must be at least 1")
        if not 0.0 < self.target_rate <= 1.0:
            raise ValueError("target_rate must lie in (0, 1]")
        if self.lr < 0.0 or self.batch_size <= 0 or self.total_steps < 0:
            raise ValueError("lr must be nonnegative; batch_size positive; "
                             "total_steps >= 0")
        if self.arch_kind not in ("MLP", "LAN", "IQE", "MRN", "Hilbert"):
            raise ValueError(f"unknown arch_kind '{self.arch_kind}'")
        if self.objective not in ("awr", "bc"):
            raise ValueError("objective must be 'awr' or 'bc'")
        if self.objective == "bc" and self.hierarchical:
            raise ValueError("behavior cloning is a flat-policy objective")
        datamod.GoalSampleRatios(*self.value_goal_ratios).validate()
        datamod.GoalSampleRatios(*self.policy_goal_ratios).validate()
        return self


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian with an MLP mean and state-independent log-std."""

    net: MlpParams
    log_std: np.ndarray

    def tree(self, prefix: str) -> dict[str, np.ndarray]:
        out = self.net.tree(f"{prefix}/net")
        out[f"{prefix}/log_std"] = self.log_std
        return out

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.net.copy(), self.log_std.copy())


def make_policy(rng: np.random.Generator, in_dim: int, hidden: tuple,
                out_dim: int) -> GaussianPolicy:
    return GaussianPolicy(init_mlp(rng, [in_dim, *tuple(hidden), out_dim]),
                          np.zeros(out_dim))


def policy_mean(policy: GaussianPolicy, x: np.ndarray) -> np.ndarray:
    return mlp_apply(policy.net, x)


@dataclass
class PolicyPair:
    high: GaussianPolicy | None
    low: GaussianPolicy


@dataclass
class LearnerState:
    config: TrainConfig
    arch: ValueArchitecture
    target_arch: ValueArchitecture
    rep: MlpParams | None
    policies: PolicyPair
    opt_value: AdamState
    opt_high: AdamState | None
    opt_low: AdamState
    norm_center: np.ndarray
    norm_scale: np.ndarray
    step: int = 0

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.norm_center) / self.norm_scale


def _value_group(state: LearnerState) -> dict[str, np.ndarray]:
    tree = {f"value/{k}": v for k, v in state.arch.tree().items()}
    if state.rep is not None:
        tree.update({f"rep/{k}": v for k, v in state.rep.tree("rep").items()})
    return tree


def init_learner(config: TrainConfig, spec: MazeSpec,
                 state_dim: int = 2, action_dim: int = 2) -> LearnerState:
    config.validate()
    rng = np.random.default_rng(config.seed)
    hier = config.hierarchical
    rep = (make_subgoal_rep(rng, state_dim, config.rep_hidden, config.rep_dim)
           if hier else None)
    arch = make_value_arch(
        rng, config.arch_kind, state_dim, config.value_hidden,
        goal_input_dim=config.rep_dim if hier else None,
        latent_dim=config.latent_dim, iqe_components=config.iqe_components,
        iqe_intervals=config.iqe_intervals, mrn_sym_dim=config.mrn_sym_dim,
        mrn_asym_dim=config.mrn_asym_dim)
    high = (make_policy(rng, 2 * state_dim, config.policy_hidden, config.rep_dim)
            if hier else None)
    low_cond = config.rep_dim if hier else state_dim
    low = make_policy(rng, state_dim + low_cond, config.policy_hidden, action_dim)
    policies = PolicyPair(high, low)

    if config.normalize_inputs:
        h, w = spec.shape
        center = np.array([w * spec.cell_size / 2.0, h * spec.cell_size / 2.0])
        scale = np.array([w * spec.cell_size / 2.0, h * spec.cell_size / 2.0])
    else:
        center = np.zeros(state_dim)
        scale = np.ones(state_dim)

    state = LearnerState(
        config=config, arch=arch, target_arch=arch.copy(), rep=rep,
        policies=policies,
        opt_value=AdamState.for_params({}), opt_high=None,
        opt_low=AdamState.for_params({}),
        norm_center=center, norm_scale=scale)
    state.opt_value = AdamState.for_params(_value_group(state))
    state.opt_low = AdamState.for_params(low.tree("low"))
    if hier:
        state.opt_high = AdamState.for_params(high.tree("high"))
    return state


def snapshot(state: LearnerState) -> LearnerState:
    """Independent deep copy safe to hand to concurrent evaluators."""
    return copy.deepcopy(state)


# ---- loss primitives ---------------------------------------------------------------


def expectile_loss(x: float, expectile: float) -> float:
    """Asymmetric squared loss |e - 1{x<0}| * x^2."""
    if not 0.0 < expectile < 1.0:
        raise ValueError("expectile must lie in (0, 1)")
    weight = (1.0 - expectile) if x < 0 else expectile
    return weight * x * x


def expectile_weights(x: np.ndarray, expectile: float) -> np.ndarray:
    return np.where(x < 0.0, 1.0 - expectile, expectile)


def awr_weights(adv: np.ndarray, temperature: float) -> np.ndarray:
    """Batch-mean-normalized exponential advantages, clipped before the mean."""
    with np.errstate(over="ignore"):
        w = np.minimum(np.exp(temperature * adv), ADV_EXP_CLIP)
    return w / w.mean()


def continuity_threshold(discount: float, v_mean: float) -> float:
    """Allowed per-transition value gap: 1 + (1 - discount) * |mean value|."""
    return 1.0 + (1.0 - discount) * abs(v_mean)


# ---- loss builders -------------------------------------------------------------------


def _lift_value(tape: Tape, state: LearnerState, trainable: bool = True):
    rep_l = (LiftedMlp(tape, state.rep, trainable=trainable, name="rep")
             if state.rep is not None else None)
    return LiftedValue(tape, state.arch, rep=rep_l, trainable=trainable), rep_l


def _target_value(state: LearnerState, s: np.ndarray, g: np.ndarray) -> np.ndarray:
    return value(state.target_arch, state.rep, s, g)


def _advantage(state: LearnerState, s_hi: np.ndarray, s_lo: np.ndarray,
               goal: np.ndarray) -> np.ndarray:
    """V(s_hi, goal) - V(s_lo, goal) with one stacked forward pass."""
    n = len(goal)
    both = value(state.arch, state.rep, np.concatenate([s_hi, s_lo]),
                 np.concatenate([goal, goal]))
    return both[:n] - both[n:]


def _value_objective(tape: Tape, state: LearnerState, batch: dict,
                     config: TrainConfig):
    """TD + weighted continuity objective on one tape; returns (node, info)."""
    obs = state.normalize(batch["obs"])
    next_obs = state.normalize(batch["next_obs"])
    goal = state.normalize(batch["value_goal"])
    lifted, rep_l = _lift_value(tape, state)

    v = lifted(tape.constant(obs, "obs"), tape.constant(goal, "value_goal"))
    tv = _target_value(state, next_obs, goal)
    bootstrap = (batch["reward"]
                 + config.discount * (1.0 - batch["done"]) * tv)
    err = tape.sub(tape.constant(bootstrap, "td_target"), v)
    weights = expectile_weights(err.value, config.expectile)
    td = tape.reduce_mean(tape.mul(tape.constant(weights), tape.square(err)))

    v_mean = float(v.value.mean())
    delta = continuity_threshold(config.discount, v_mean)
    info = {"td_loss": float(td.value), "v_mean": v_mean, "delta": delta,
            "continuity_loss": 0.0}
    if config.continuity_weight == 0.0:
        return td, info, lifted, rep_l

    rand_goal = state.normalize(batch["rand_goal"])
    rg = tape.constant(rand_goal, "rand_goal")
    gap = tape.sub(lifted(tape.constant(obs), rg),
                   lifted(tape.constant(next_obs), rg))
    hinge = tape.relu(tape.sub(tape.square(gap), tape.constant(delta * delta)))
    cont = tape.reduce_mean(hinge)
    info["continuity_loss"] = float(cont.value)
    total = tape.add(td, tape.mul(tape.constant(config.continuity_weight), cont))
    return total, info, lifted, rep_l


def td_loss(state: LearnerState, batch: dict, config: TrainConfig | None = None) -> float:
    config = config or state.config
    tape = Tape()
    saved = config.continuity_weight
    try:
        config.continuity_weight = 0.0
        node, info, _, _ = _value_objective(tape, state, batch, config)
    finally:
        config.continuity_weight = saved
    _check_finite(info["td_loss"], "td_loss", state.step)
    return info["td_loss"]


def continuity_loss(state: LearnerState, batch: dict,
                    config: TrainConfig | None = None) -> float:
    config = config or state.config
    obs = state.normalize(batch["obs"])
    next_obs = state.normalize(batch["next_obs"])
    rand_goal = state.normalize(batch["rand_goal"])
    v_mean = float(value(state.arch, state.rep, obs,
                         state.normalize(batch["value_goal"])).mean())
    delta = continuity_threshold(config.discount, v_mean)
    gap = (value(state.arch, state.rep, obs, rand_goal)
           - value(state.arch, state.rep, next_obs, rand_goal))
    return float(np.maximum(gap * gap - delta * delta, 0.0).mean())


def value_loss(state: LearnerState, batch: dict,
               config: TrainConfig | None = None) -> float:
    config = config or state.config
    tape = Tape()
    node, info, _, _ = _value_objective(tape, state, batch, config)
    _check_finite(float(node.value), "value_loss", state.step)
    return float(node.value)


def _gaussian_logprob(tape: Tape, mean: Node, log_std: Node, target: Node) -> Node:
    dim = mean.value.shape[1]
    ls = tape.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    inv = tape.exp(tape.neg(ls))
    z = tape.mul(tape.sub(target, mean), inv)
    quad = tape.reduce_sum(tape.square(z), axis=1)
    logdet = tape.reduce_sum(ls)
    const = 0.5 * dim * math.log(2.0 * math.pi)
    half = tape.mul(quad, tape.constant(-0.5))
    return tape.sub(tape.sub(half, logdet), tape.constant(const))


def _policy_objective_high(tape: Tape, state: LearnerState, batch: dict,
                           config: TrainConfig, temperature: float):
    if not config.hierarchical or state.policies.high is None:
        raise GraphError("high_policy_loss requires hierarchical mode")
    obs = state.normalize(batch["obs"])
    goal = state.normalize(batch["policy_goal"])
    sub = state.normalize(batch["subgoal"])
    adv = _advantage(state, sub, obs, goal)
    w = awr_weights(adv, temperature)

    rep_l = LiftedMlp(tape, state.rep, trainable=config.rep_grad_from_policy,
                      name="rep")
    target = rep_l(tape.constant(sub, "subgoal"))
    pol = state.policies.high
    net = LiftedMlp(tape, pol.net, name="high.net")
    log_std = tape.leaf(pol.log_std, "high.log_std")
    mean = net(tape.concat(tape.constant(obs), tape.constant(goal)))
    logp = _gaussian_logprob(tape, mean, log_std, target)
    loss = tape.neg(tape.reduce_mean(tape.mul(tape.constant(w), logp)))
    nodes = pol_tree_nodes(net, log_std, "high")
    return loss, nodes, rep_l


def _policy_objective_low(tape: Tape, state: LearnerState, batch: dict,
                          config: TrainConfig, temperature: float):
    obs = state.normalize(batch["obs"])
    next_obs = state.normalize(batch["next_obs"])
    rep_l = None
    if config.objective == "bc":
        w = np.ones(len(obs))
        cond = tape.constant(state.normalize(batch["policy_goal"]), "policy_goal")
    elif config.hierarchical:
        sub = state.normalize(batch["subgoal"])
        w = awr_weights(_advantage(state, next_obs, obs, sub), temperature)
        rep_l = LiftedMlp(tape, state.rep, trainable=config.rep_grad_from_policy,
                          name="rep")
        cond = rep_l(tape.constant(sub, "subgoal"))
    else:
        goal = state.normalize(batch["policy_goal"])
        w = awr_weights(_advantage(state, next_obs, obs, goal), temperature)
        cond = tape.constant(goal, "policy_goal")
    pol = state.policies.low
    net = LiftedMlp(tape, pol.net, name="low.net")
    log_std = tape.leaf(pol.log_std, "low.log_std")
    mean = net(tape.concat(tape.constant(obs), cond))
    logp = _gaussian_logprob(tape, mean, log_std,
                             tape.constant(batch["action"], "action"))
    loss = tape.neg(tape.reduce_mean(tape.mul(tape.constant(w), logp)))
    nodes = pol_tree_nodes(net, log_std, "low")
    return loss, nodes, rep_l


def pol_tree_nodes(net: LiftedMlp, log_std: Node, prefix: str) -> dict[str, Node]:
    nodes = {}
    for i, (wn, bn) in enumerate(zip(net.weights, net.biases)):
        nodes[f"{prefix}/net.w{i}"] = wn
        nodes[f"{prefix}/net.b{i}"] = bn
    nodes[f"{prefix}/log_std"] = log_std
    return nodes


def high_policy_loss(state: LearnerState, batch: dict,
                     temperature: float | None = None) -> float:
    config = state.config
    tape = Tape()
    loss, _, _ = _policy_objective_high(
        tape, state, batch, config,
        config.high_temp if temperature is None else temperature)
    _check_finite(float(loss.value), "high_policy_loss", state.step)
    return float(loss.value)


def low_policy_loss(state: LearnerState, batch: dict,
                    temperature: float | None = None) -> float:
    config = state.config
    tape = Tape()
    loss, _, _ = _policy_objective_low(
        tape, state, batch, config,
        config.low_temp if temperature is None else temperature)
    _check_finite(float(loss.value), "low_policy_loss", state.step)
    return float(loss.value)


def gcbc_loss(state: LearnerState, batch: dict) -> float:
    """Uniform-weight goal-conditioned cloning (flat mode only)."""
    if state.config.hierarchical:
        raise GraphError("gcbc_loss requires flat mode")
    config = replace(state.config, objective="bc")
    tape = Tape()
    loss, _, _ = _policy_objective_low(tape, state, batch, config, 1.0)
    return float(loss.value)


def _check_finite(x: float, what: str, step: int) -> None:
    if not math.isfinite(x):
        raise GraphError(f"{what}: non-finite at training step {step}")


# ---- optimization step -----------------------------------------------------------------


def _grads_for(tape: Tape, nodes: dict[str, Node]) -> dict[str, np.ndarray]:
    return {name: tape.grad(node) for name, node in nodes.items()}


def train_step(state: LearnerState, batch: dict,
               config: TrainConfig | None = None) -> tuple[LearnerState, dict]:
    """One optimization step over all parameter groups, then target smoothing."""
    config = config or state.config
    hier = config.hierarchical
    metrics = {}

    # value group (encoders, trunk, and the bottleneck via the value loss)
    if config.objective != "bc":
        tape = Tape()
        total, info, lifted, rep_l = _value_objective(tape, state, batch, config)
        _check_finite(float(total.value), "value_loss", state.step)
        tape.backward(total)
        value_nodes = lifted.tree("value")
        if rep_l is not None:
            value_nodes.update({f"rep/{k}": n
                                for k, n in rep_l.tree("rep").items()})
        value_grads = _grads_for(tape, value_nodes)
        metrics.update(info)
    else:
        value_grads = None
        metrics.update({"td_loss": float("nan"), "continuity_loss": float("nan"),
                        "v_mean": float("nan"), "delta": float("nan")})

    # high-level policy
    high_grads = None
    rep_from_high = None
    if hier:
        tape_h = Tape()
        loss_h, nodes_h, rep_lh = _policy_objective_high(
            tape_h, state, batch, config, config.high_temp)
        _check_finite(float(loss_h.value), "high_policy_loss", state.step)
        tape_h.backward(loss_h)
        high_grads = _grads_for(tape_h, nodes_h)
        if config.rep_grad_from_policy:
            rep_from_high = {f"rep/{k}": tape_h.grad(n)
                             for k, n in rep_lh.tree("rep").items()}
        metrics["high_policy_loss"] = float(loss_h.value)
    else:
        metrics["high_policy_loss"] = float("nan")

    # low-level policy
    tape_l = Tape()
    loss_l, nodes_l, rep_ll = _policy_objective_low(
        tape_l, state, batch, config, config.low_temp)
    _check_finite(float(loss_l.value), "low_policy_loss", state.step)
    tape_l.backward(loss_l)
    low_grads = _grads_for(tape_l, nodes_l)
    rep_from_low = None
    if hier and config.rep_grad_from_policy and rep_ll is not None:
        rep_from_low = {f"rep/{k}": tape_l.grad(n)
                        for k, n in rep_ll.tree("rep").items()}
    metrics["low_policy_loss"] = float(loss_l.value)

    # one Adam step per group; bottleneck gradients are summed across losses
    if value_grads is not None:
        for extra in (rep_from_high, rep_from_low):
            if extra:
                for name, g in extra.items():
                    value_grads[name] = value_grads[name] + g
        adam_step(_value_group(state), value_grads, state.opt_value, config.lr)
    if high_grads is not None:
        adam_step(state.policies.high.tree("high"), high_grads,
                  state.opt_high, config.lr)
    adam_step(state.policies.low.tree("low"), low_grads, state.opt_low, config.lr)

    if config.objective != "bc":
        polyak_update(state.target_arch.tree(), state.arch.tree(),
                      config.target_rate)
    state.step += 1
    metrics["step"] = state.step
    return state, metrics


# ---- checkpoint trees --------------------------------------------------------------------


def state_tree(state: LearnerState) -> dict[str, np.ndarray]:
    """Flat named-tensor view of everything a checkpoint must restore."""
    tree = dict(_value_group(state))
    tree.update({f"target/{k}": v for k, v in state.target_arch.tree().items()})
    tree.update(state.policies.low.tree("low"))
    if state.policies.high is not None:
        tree.update(state.policies.high.tree("high"))
    for group, opt in (("opt_value", state.opt_value),
                       ("opt_high", state.opt_high),
                       ("opt_low", state.opt_low)):
        if opt is None:
            continue
        for k, v in opt.mean.items():
            tree[f"{group}/m/{k}"] = v
        for k, v in opt.var.items():
            tree[f"{group}/v/{k}"] = v
        tree[f"{group}/count"] = np.array(float(opt.count))
    tree["norm/center"] = state.norm_center
    tree["norm/scale"] = state.norm_scale
    tree["step"] = np.array(float(state.step))
    return tree


def load_state_tree(state: LearnerState, tree: dict[str, np.ndarray]) -> LearnerState:
    """Fill a freshly initialized learner from a checkpoint tensor dict."""
    own = state_tree(state)
    if set(own) != set(tree):
        missing = set(own) ^ set(tree)
        raise GraphError(f"checkpoint does not match configuration: {sorted(missing)[:4]}")
    for name, arr in own.items():
        src = np.asarray(tree[name], dtype=np.float64)
        if arr.shape != src.shape:
            raise GraphError(f"checkpoint tensor '{name}' has shape {src.shape}, "
                             f"expected {arr.shape}")
        arr[...] = src  # counters are synthesized views; restored for real below
    state.opt_value.count = int(tree["opt_value/count"])
    state.opt_low.count = int(tree["opt_low/count"])
    if state.opt_high is not None:
        state.opt_high.count = int(tree["opt_high/count"])
    state.step = int(tree["step"])
    return state
