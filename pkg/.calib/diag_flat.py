import sys, time
import numpy as np
from mazegcrl import data, maze, training as T, evaluation as E

gamma = float(sys.argv[1]); steps = int(sys.argv[2])
ratios = sys.argv[3]  # "default" | "stitchy"
vr = data.VALUE_GOAL_RATIOS_DEFAULT if ratios == "default" else data.VALUE_GOAL_RATIOS_STITCH
spec = maze.builtin_layout("medium")
ds = data.collect_navigate(spec, 100_000, 0.5, seed=100)
cfg = T.TrainConfig(arch_kind="LAN", hierarchical=False, continuity_weight=0.0,
                    discount=gamma, value_goal_ratios=vr, total_steps=steps, seed=0)
state = T.init_learner(cfg, spec)
rng = np.random.default_rng([0, 1])
t0 = time.time()
for i in range(1, steps + 1):
    b = data.sample_batch(ds, 256, cfg.value_goal_ratios, cfg.policy_goal_ratios,
                          cfg.discount, cfg.subgoal_steps, spec.goal_radius, rng)
    state, m = T.train_step(state, b)
fn = E.learner_value_fn(state)
rep = E.evaluate(state, spec, spec.tasks, 10, np.random.default_rng(1))
# value along task-4 optimal path
task = spec.tasks[4]
traj = maze.optimal_trajectory(spec, task)
vals = fn(traj.states, task.goal)
print(f"gamma={gamma} ratios={ratios} steps={steps} ({time.time()-t0:.0f}s): "
      f"succ={rep.aggregate_success:.2f} kendall={rep.mean_kendall:.3f} "
      f"align={rep.mean_alignment:.3f}")
print("  V along longest path:", np.array2string(vals, precision=2))
print("  ideal:", np.array2string(-(1-gamma**((len(vals)-1-np.arange(len(vals)))*2.5))/(1-gamma), precision=2))
