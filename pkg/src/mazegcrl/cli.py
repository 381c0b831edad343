"""Experiment front end: gen-data, train, eval, ablate, landscape.

Configuration is flat dotted key=value text (files via --config, overrides
via --set); unknown keys are rejected. Every emitted byte except manifest
timestamps is a deterministic function of (config, seed).

Exit status is 0 on success; on failure the first stderr line is
"<category>: <message>" with category one of usage, config, io, dims,
numeric, env.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, data as datamod, evaluation as evalmod, maze
from . import training as trainmod
from .autodiff import GraphError
from .maze import MazeError
from .training import LearnerState, TrainConfig
from .values import read_tensors, write_tensors

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config_lines",
    "config_lines",
    "config_hash",
    "cmd_gen_data",
    "cmd_train",
    "cmd_eval",
    "cmd_ablate",
    "cmd_landscape",
    "read_metrics_csv",
    "read_summary_csv",
    "read_runs_csv",
    "main",
]


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(","))


def _parse_ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(","))


def _parse_strs(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _parse_bools(text: str) -> tuple:
    return tuple(_parse_bool(x) for x in text.split(","))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    """Full run description: environment, data, training, orchestration."""

    layout: str = "medium"
    style: str = "navigate"
    transitions: int = 100_000
    noise: float = 0.5
    segment_len: int = 8
    data_seed: int = 100
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs/latest"
    checkpoint_every: int = 0
    eval_every: int = 0
    metrics_every: int = 100
    eval_trials: int = 50
    landscape_resolution: int = 2
    grid_arch_kinds: tuple = ("LAN", "MLP")
    grid_hierarchical: tuple = (False,)
    grid_continuity: tuple = (0.0,)
    grid_styles: tuple = ("stitch",)
    grid_seeds: tuple = (0, 1, 2)
    explicit: set = field(default_factory=set)

    def finalize(self) -> "RunConfig":
        if self.layout not in maze.LAYOUT_NAMES:
            raise ConfigError(f"env.layout must be one of {maze.LAYOUT_NAMES}")
        if self.style not in ("navigate", "stitch"):
            raise ConfigError("data.style must be navigate or stitch")
        # value-goal mixture defaults follow the dataset style
        if "train.value_goal_ratios" not in self.explicit:
            ratios = (datamod.VALUE_GOAL_RATIOS_STITCH if self.style == "stitch"
                      else datamod.VALUE_GOAL_RATIOS_DEFAULT)
            self.train.value_goal_ratios = ratios
        try:
            self.train.validate()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if self.transitions <= 0 or self.segment_len < 2:
            raise ConfigError("data.transitions must be positive, "
                              "data.segment_len at least 2")
        if min(self.metrics_every, self.eval_trials,
               self.landscape_resolution) < 1:
            raise ConfigError("run.metrics_every, run.eval_trials and "
                              "run.landscape_resolution must be at least 1")
        if min(self.checkpoint_every, self.eval_every) < 0:
            raise ConfigError("cadences must be nonnegative")
        for kind in self.grid_arch_kinds:
            if kind not in ("MLP", "LAN", "IQE", "MRN", "Hilbert"):
                raise ConfigError(f"unknown grid architecture '{kind}'")
        for style in self.grid_styles:
            if style not in ("navigate", "stitch"):
                raise ConfigError(f"unknown grid style '{style}'")
        return self


# key -> (getter, setter) over RunConfig; setters parse strings
def _train_field(name, parser):
    return (lambda c: getattr(c.train, name),
            lambda c, v: setattr(c.train, name, parser(v)))


def _own_field(name, parser):
    return (lambda c: getattr(c, name),
            lambda c, v: setattr(c, name, parser(v)))


_KEYS = {
    "env.layout": _own_field("layout", str),
    "data.style": _own_field("style", str),
    "data.transitions": _own_field("transitions", int),
    "data.noise": _own_field("noise", float),
    "data.segment_len": _own_field("segment_len", int),
    "data.seed": _own_field("data_seed", int),
    "train.gamma": _train_field("discount", float),
    "train.expectile": _train_field("expectile", float),
    "train.continuity_weight": _train_field("continuity_weight", float),
    "train.high_temp": _train_field("high_temp", float),
    "train.low_temp": _train_field("low_temp", float),
    "train.subgoal_steps": _train_field("subgoal_steps", int),
    "train.target_rate": _train_field("target_rate", float),
    "train.lr": _train_field("lr", float),
    "train.batch_size": _train_field("batch_size", int),
    "train.steps": _train_field("total_steps", int),
    "train.value_goal_ratios": _train_field("value_goal_ratios", _parse_floats),
    "train.policy_goal_ratios": _train_field("policy_goal_ratios", _parse_floats),
    "train.hierarchical": _train_field("hierarchical", _parse_bool),
    "train.rep_grad_from_policy": _train_field("rep_grad_from_policy", _parse_bool),
    "train.objective": _train_field("objective", str),
    "train.normalize_inputs": _train_field("normalize_inputs", _parse_bool),
    "train.seed": _train_field("seed", int),
    "arch.kind": _train_field("arch_kind", str),
    "arch.value_hidden": _train_field("value_hidden", _parse_ints),
    "arch.policy_hidden": _train_field("policy_hidden", _parse_ints),
    "arch.rep_hidden": _train_field("rep_hidden", _parse_ints),
    "arch.rep_dim": _train_field("rep_dim", int),
    "arch.latent_dim": _train_field("latent_dim", int),
    "arch.iqe_components": _train_field("iqe_components", int),
    "arch.iqe_intervals": _train_field("iqe_intervals", int),
    "arch.mrn_sym_dim": _train_field("mrn_sym_dim", int),
    "arch.mrn_asym_dim": _train_field("mrn_asym_dim", int),
    "run.out_dir": _own_field("out_dir", str),
    "run.checkpoint_every": _own_field("checkpoint_every", int),
    "run.eval_every": _own_field("eval_every", int),
    "run.metrics_every": _own_field("metrics_every", int),
    "run.eval_trials": _own_field("eval_trials", int),
    "run.landscape_resolution": _own_field("landscape_resolution", int),
    "grid.arch_kinds": _own_field("grid_arch_kinds", _parse_strs),
    "grid.hierarchical": _own_field("grid_hierarchical", _parse_bools),
    "grid.continuity_weights": _own_field("grid_continuity", _parse_floats),
    "grid.styles": _own_field("grid_styles", _parse_strs),
    "grid.seeds": _own_field("grid_seeds", _parse_ints),
}


def parse_config_lines(lines, config: RunConfig | None = None) -> RunConfig:
    config = config or RunConfig()
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"unknown configuration key '{key}'")
        getter, setter = _KEYS[key]
        try:
            setter(config, value)
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad value for '{key}': {err}") from None
        config.explicit.add(key)
    return config


def config_lines(config: RunConfig) -> list[str]:
    """Canonical resolved key=value lines, sorted by key."""
    return [f"{key}={_fmt(getter(config))}"
            for key, (getter, _) in sorted(_KEYS.items())]


def config_hash(config: RunConfig) -> str:
    semantic = [line for line in config_lines(config)
                if not line.startswith("run.out_dir=")]
    return hashlib.sha256("\n".join(semantic).encode()).hexdigest()


def load_config(paths, sets) -> RunConfig:
    config = RunConfig()
    for path in paths or ():
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise FileNotFoundError(f"cannot read config file {path}: {err}") from None
        parse_config_lines(text.splitlines(), config)
    parse_config_lines(sets or (), config)
    return config.finalize()


# ---- shared run machinery -----------------------------------------------------------


def _fmtf(x: float) -> str:
    return f"{x:.17g}"


def _generate_dataset(config: RunConfig, spec) -> datamod.Dataset:
    if config.style == "navigate":
        return datamod.collect_navigate(spec, config.transitions, config.noise,
                                        config.data_seed)
    return datamod.collect_stitch(spec, config.transitions, config.segment_len,
                                  config.noise, config.data_seed)


def _dataset_manifest(config: RunConfig, spec, dataset) -> dict:
    info = {
        "layout": config.layout,
        "style": config.style,
        "transitions": dataset.n_transitions,
        "n_trajectories": len(dataset.trajectories),
        "cell_coverage": datamod.cell_coverage(dataset, spec),
        "tasks_covered_by_single_trajectory": [
            datamod.task_covered(dataset, spec, task) for task in spec.tasks],
    }
    if config.style == "stitch":
        info["max_bfs_span"] = max(datamod.trajectory_span(spec, t)
                                   for t in dataset.trajectories)
        info["segment_len"] = config.segment_len
    return info


def cmd_gen_data(config: RunConfig, out_path: str) -> dict:
    spec = maze.builtin_layout(config.layout)
    dataset = _generate_dataset(config, spec)
    datamod.write_dataset(dataset, out_path)
    info = _dataset_manifest(config, spec, dataset)
    info["config_hash"] = config_hash(config)
    Path(str(out_path) + ".manifest.json").write_text(
        json.dumps(info, indent=2) + "\n")
    print(f"wrote {dataset.n_transitions} transitions "
          f"({len(dataset.trajectories)} trajectories) to {out_path}")
    print(f"free-cell coverage: {info['cell_coverage']:.3f}")
    if "max_bfs_span" in info:
        print(f"max single-trajectory span: {info['max_bfs_span']} cells")
    return info


def _protocol_steps(total: int) -> list[int]:
    return sorted({int(round(f * total)) for f in (0.8, 0.9, 1.0)})


def _metrics_row(m: dict) -> str:
    return ",".join([str(m["step"])] + [
        _fmtf(m[k]) for k in ("td_loss", "continuity_loss", "high_policy_loss",
                              "low_policy_loss", "v_mean", "delta")])


def read_metrics_csv(text: str) -> list[dict]:
    lines = text.strip().split("\n")
    if lines[0] != ",".join(trainmod.METRIC_FIELDS):
        raise ValueError("bad metrics header")
    out = []
    for line in lines[1:]:
        parts = line.split(",")
        row = {"step": int(parts[0])}
        row.update({k: float(v) for k, v in zip(trainmod.METRIC_FIELDS[1:],
                                                parts[1:])})
        out.append(row)
    return out


def _checkpoint_name(step: int) -> str:
    return f"ckpt_{step:08d}.txt"


def cmd_train(config: RunConfig, data_path: str) -> dict:
    spec = maze.builtin_layout(config.layout)
    dataset = datamod.read_dataset(data_path)
    if dataset.state_dim != 2 or dataset.action_dim != 2:
        raise GraphError(f"dataset dims ({dataset.state_dim}, "
                         f"{dataset.action_dim}) do not match the layout")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config.train
    state = trainmod.init_learner(cfg, spec)
    batch_rng = np.random.default_rng([cfg.seed, 1])
    total = cfg.total_steps
    protocol = _protocol_steps(total)
    eval_at = set(protocol)
    if config.eval_every > 0:
        eval_at.update(range(config.eval_every, total + 1, config.eval_every))
    ckpt_at = set(protocol)
    if config.checkpoint_every > 0:
        ckpt_at.update(range(config.checkpoint_every, total + 1,
                             config.checkpoint_every))

    manifest = {
        "command": "train",
        "config_hash": config_hash(config),
        "seed": cfg.seed,
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    reports: list[evalmod.EvalReport] = []
    protocol_reports: list[evalmod.EvalReport] = []

    def run_eval(step):
        rng = np.random.default_rng([cfg.seed, 2, step])
        report = evalmod.evaluate(state, spec, spec.tasks, config.eval_trials,
                                  rng)
        reports.append(report)
        if step in protocol:
            protocol_reports.append(report)

    metrics_lines = [",".join(trainmod.METRIC_FIELDS)]
    error = None
    try:
        if 0 in eval_at:
            run_eval(0)
        if 0 in ckpt_at:
            write_tensors(trainmod.state_tree(state), out / _checkpoint_name(0))
        for step in range(1, total + 1):
            batch = datamod.sample_batch(
                dataset, cfg.batch_size, cfg.value_goal_ratios,
                cfg.policy_goal_ratios, cfg.discount, cfg.subgoal_steps,
                spec.goal_radius, batch_rng)
            state, metrics = trainmod.train_step(state, batch)
            if step % config.metrics_every == 0 or step == total:
                metrics_lines.append(_metrics_row(metrics))
            if step in eval_at:
                run_eval(step)
            if step in ckpt_at:
                write_tensors(trainmod.state_tree(state),
                              out / _checkpoint_name(step))
    except GraphError as err:
        if "non-finite" not in str(err):
            raise
        error = str(err)
        write_tensors(trainmod.state_tree(state),
                      out / f"ckpt_abort_{state.step:08d}.txt")

    (out / "metrics.csv").write_text("\n".join(metrics_lines) + "\n")
    (out / "report.csv").write_text(evalmod.report_to_csv(reports))
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    if error is None:
        summary = {
            "protocol_steps": protocol,
            "protocol_success": [r.aggregate_success for r in protocol_reports],
            "success": float(np.mean([r.aggregate_success
                                      for r in protocol_reports])),
            "final_kendall": protocol_reports[-1].mean_kendall,
            "final_alignment": protocol_reports[-1].mean_alignment,
        }
        manifest["final_eval"] = summary
    else:
        manifest["error"] = error
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if error is not None:
        raise GraphError(error)
    print(f"trained {total} steps; protocol success "
          f"{manifest['final_eval']['success']:.3f}; outputs in {out}")
    return manifest


def _load_learner(config: RunConfig, ckpt_path: str) -> tuple:
    spec = maze.builtin_layout(config.layout)
    state = trainmod.init_learner(config.train, spec)
    trainmod.load_state_tree(state, read_tensors(ckpt_path))
    return spec, state


def cmd_eval(config: RunConfig, ckpt_path: str, out_path: str) -> evalmod.EvalReport:
    spec, state = _load_learner(config, ckpt_path)
    rng = np.random.default_rng([config.train.seed, 2, state.step])
    report = evalmod.evaluate(state, spec, spec.tasks, config.eval_trials, rng)
    Path(out_path).write_text(evalmod.report_to_csv([report]))
    print(f"step {report.checkpoint_step}: success "
          f"{report.aggregate_success:.3f}, kendall {report.mean_kendall:.3f}, "
          f"alignment {report.mean_alignment:.3f}")
    return report


_SUMMARY_HEADER = ("arch,hierarchical,continuity_weight,style,n_seeds,n_ok,"
                   "success_mean,success_std,alignment_mean,alignment_std,"
                   "kendall_mean,kendall_std")


def read_summary_csv(text: str) -> list[dict]:
    lines = text.strip().split("\n")
    if lines[0] != _SUMMARY_HEADER:
        raise ValueError("bad summary header")
    rows = []
    for line in lines[1:]:
        vals = line.split(",")
        rows.append({
            "arch": vals[0], "hierarchical": vals[1] == "true",
            "continuity_weight": float(vals[2]), "style": vals[3],
            "n_seeds": int(vals[4]), "n_ok": int(vals[5]),
            "success_mean": float(vals[6]), "success_std": float(vals[7]),
            "alignment_mean": float(vals[8]), "alignment_std": float(vals[9]),
            "kendall_mean": float(vals[10]), "kendall_std": float(vals[11]),
        })
    return rows


_RUNS_HEADER = ("arch,hierarchical,continuity_weight,style,seed,"
                "success,alignment,kendall,status")


def read_runs_csv(text: str) -> list[dict]:
    lines = text.strip().split("\n")
    if lines[0] != _RUNS_HEADER:
        raise ValueError("bad runs header")
    rows = []
    for line in lines[1:]:
        vals = line.split(",")
        rows.append({
            "arch": vals[0], "hierarchical": vals[1] == "true",
            "continuity_weight": float(vals[2]), "style": vals[3],
            "seed": int(vals[4]), "success": float(vals[5]),
            "alignment": float(vals[6]), "kendall": float(vals[7]),
            "status": vals[8],
        })
    return rows


def cmd_ablate(config: RunConfig, out_dir: str) -> list[dict]:
    """Run the grid end to end: per-seed rows plus per-cell aggregates."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset_paths = {}
    for style in config.grid_styles:
        dcfg = replace_style(config, style)
        path = out / f"dataset_{config.layout}_{style}.dset"
        spec = maze.builtin_layout(config.layout)
        datamod.write_dataset(_generate_dataset(dcfg, spec), path)
        dataset_paths[style] = path

    rows = []
    run_lines = [_RUNS_HEADER]
    summary_lines = [_SUMMARY_HEADER]
    for kind in config.grid_arch_kinds:
        for hier in config.grid_hierarchical:
            for wc in config.grid_continuity:
                for style in config.grid_styles:
                    cell = _run_cell(config, kind, hier, wc, style,
                                     dataset_paths[style], out, run_lines)
                    rows.append(cell)
                    summary_lines.append(_summary_row(cell))
    (out / "runs.csv").write_text("\n".join(run_lines) + "\n")
    (out / "summary.csv").write_text("\n".join(summary_lines) + "\n")
    print(f"{len(rows)} grid cells ({len(run_lines) - 1} runs) written "
          f"to {out / 'summary.csv'}")
    return rows


def replace_style(config: RunConfig, style: str) -> RunConfig:
    import copy as _copy

    clone = _copy.deepcopy(config)
    clone.style = style
    if "train.value_goal_ratios" not in clone.explicit:
        clone.train.value_goal_ratios = (
            datamod.VALUE_GOAL_RATIOS_STITCH if style == "stitch"
            else datamod.VALUE_GOAL_RATIOS_DEFAULT)
    return clone


def _run_cell(config, kind, hier, wc, style, data_path, out: Path,
              run_lines: list[str]) -> dict:
    cell = {"arch": kind, "hierarchical": hier, "continuity_weight": wc,
            "style": style, "n_seeds": len(config.grid_seeds)}
    hier_s = "true" if hier else "false"
    success, alignment, kendall = [], [], []
    for seed in config.grid_seeds:
        run = replace_style(config, style)
        run.train = replace(run.train, arch_kind=kind, hierarchical=hier,
                            continuity_weight=wc, seed=seed)
        name = f"{kind}_{'hier' if hier else 'flat'}_wc{wc:g}_{style}_s{seed}"
        run.out_dir = str(out / name)
        try:
            manifest = cmd_train(run, data_path)
        except (GraphError, MazeError, ValueError) as err:
            print(f"cell {name} failed: {err}", file=sys.stderr)
            run_lines.append(f"{kind},{hier_s},{_fmtf(wc)},{style},{seed},"
                             f"nan,nan,nan,failed")
            continue
        summary = manifest["final_eval"]
        success.append(summary["success"])
        alignment.append(summary["final_alignment"])
        kendall.append(summary["final_kendall"])
        run_lines.append(
            f"{kind},{hier_s},{_fmtf(wc)},{style},{seed},"
            f"{_fmtf(summary['success'])},{_fmtf(summary['final_alignment'])},"
            f"{_fmtf(summary['final_kendall'])},ok")
    cell["n_ok"] = len(success)
    for label, vals in (("success", success), ("alignment", alignment),
                        ("kendall", kendall)):
        cell[f"{label}_mean"] = float(np.mean(vals)) if vals else float("nan")
        cell[f"{label}_std"] = float(np.std(vals)) if vals else float("nan")
    return cell


def _summary_row(cell: dict) -> str:
    return ",".join([
        cell["arch"], "true" if cell["hierarchical"] else "false",
        _fmtf(cell["continuity_weight"]), cell["style"],
        str(cell["n_seeds"]), str(cell["n_ok"]),
        _fmtf(cell["success_mean"]), _fmtf(cell["success_std"]),
        _fmtf(cell["alignment_mean"]), _fmtf(cell["alignment_std"]),
        _fmtf(cell["kendall_mean"]), _fmtf(cell["kendall_std"])])


def cmd_landscape(config: RunConfig, ckpt_path: str, out_path: str,
                  goal=None, task: int | None = None) -> None:
    spec, state = _load_learner(config, ckpt_path)
    if goal is None:
        if task is None:
            raise ConfigError("landscape needs --goal x,y or --task N")
        if not 0 <= task < len(spec.tasks):
            raise ConfigError(f"task index {task} out of range")
        goal = spec.tasks[task].goal
    if not maze.is_valid_state(spec, tuple(goal)):
        raise MazeError(f"goal {tuple(goal)} is not inside a free cell")
    grid = evalmod.value_landscape(evalmod.learner_value_fn(state), spec,
                                   tuple(goal), config.landscape_resolution)
    Path(out_path).write_text(evalmod.landscape_to_csv(grid))
    print(f"wrote {len(grid.values)} landscape samples to {out_path}")


# ---- entry point ------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mazegcrl",
        description="Offline goal-conditioned RL on point mazes")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", action="append", default=[],
                       help="config file with key=value lines (repeatable)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                       help="single config override (repeatable)")

    p = sub.add_parser("gen-data", help="collect an offline dataset")
    common(p)
    p.add_argument("--out", required=True, help="dataset output path")

    p = sub.add_parser("train", help="train one agent on a dataset file")
    common(p)
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--out", help="output directory (overrides run.out_dir)")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="report CSV path")

    p = sub.add_parser("ablate", help="run a configuration grid")
    common(p)
    p.add_argument("--out", required=True, help="grid output directory")

    p = sub.add_parser("landscape", help="export a value landscape CSV")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--goal", help="goal as x,y")
    p.add_argument("--task", type=int, help="canonical task index")
    return parser


def _dispatch(args) -> int:
    config = load_config(args.config, args.set)
    if args.verb == "gen-data":
        cmd_gen_data(config, args.out)
    elif args.verb == "train":
        if args.out:
            config.out_dir = args.out
        cmd_train(config, args.data)
    elif args.verb == "eval":
        cmd_eval(config, args.ckpt, args.out)
    elif args.verb == "ablate":
        cmd_ablate(config, args.out)
    elif args.verb == "landscape":
        goal = None
        if args.goal is not None:
            parts = args.goal.split(",")
            if len(parts) != 2:
                raise ConfigError("--goal must be x,y")
            goal = (float(parts[0]), float(parts[1]))
        cmd_landscape(config, args.ckpt, args.out, goal=goal, task=args.task)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        if err.code not in (0, None):
            print("usage: bad arguments", file=sys.stderr)
            return 2
        return 0
    try:
        return _dispatch(args)
    except ConfigError as err:
        print(f"config: {err}", file=sys.stderr)
    except FileNotFoundError as err:
        print(f"io: {err}", file=sys.stderr)
    except OSError as err:
        print(f"io: {err}", file=sys.stderr)
    except MazeError as err:
        print(f"env: {err}", file=sys.stderr)
    except GraphError as err:
        category = "numeric" if "non-finite" in str(err) else "dims"
        print(f"{category}: {err}", file=sys.stderr)
    except ValueError as err:
        print(f"config: {err}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
