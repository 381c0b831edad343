import sys, time
import numpy as np
from mazegcrl import data, maze, training as T, evaluation as E

tau = float(sys.argv[1]); steps = int(sys.argv[2]); lr = float(sys.argv[3]) if len(sys.argv)>3 else 3e-4
spec = maze.builtin_layout("medium")
ds = data.collect_navigate(spec, 100_000, 0.5, seed=100)
cfg = T.TrainConfig(arch_kind="LAN", hierarchical=False, continuity_weight=0.0,
                    discount=0.99, target_rate=tau, lr=lr, total_steps=steps, seed=0)
state = T.init_learner(cfg, spec)
rng = np.random.default_rng([0, 1])
t0 = time.time()
for i in range(1, steps + 1):
    b = data.sample_batch(ds, 256, cfg.value_goal_ratios, cfg.policy_goal_ratios,
                          cfg.discount, cfg.subgoal_steps, spec.goal_radius, rng)
    state, m = T.train_step(state, b)
    if i % max(steps//4,1) == 0:
        rep = E.evaluate(state, spec, spec.tasks, 10, np.random.default_rng(1))
        task = spec.tasks[4]
        fn = E.learner_value_fn(state)
        vals = fn(maze.optimal_trajectory(spec, task).states, task.goal)
        mono = float(np.mean(np.diff(vals) > 0))
        print(f"tau={tau} lr={lr} step {i} ({time.time()-t0:.0f}s): succ={rep.aggregate_success:.2f} "
              f"align={rep.mean_alignment:.3f} kendall={rep.mean_kendall:.3f} path-mono={mono:.2f} "
              f"V0={vals[0]:.1f}", flush=True)
