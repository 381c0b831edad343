import sys, time
import numpy as np
from mazegcrl import data, maze, training as T, evaluation as E

kind = sys.argv[1] if len(sys.argv) > 1 else "LAN"
wc = float(sys.argv[2]) if len(sys.argv) > 2 else 1.0
steps = int(sys.argv[3]) if len(sys.argv) > 3 else 20000
seed = int(sys.argv[4]) if len(sys.argv) > 4 else 0

spec = maze.builtin_layout("medium")
ds = data.collect_navigate(spec, 100_000, 0.5, seed=100)
cfg = T.TrainConfig(arch_kind=kind, hierarchical=True, continuity_weight=wc,
                    total_steps=steps, seed=seed)
state = T.init_learner(cfg, spec)
rng = np.random.default_rng([cfg.seed, 1])
t0 = time.time()
for i in range(1, steps + 1):
    b = data.sample_batch(ds, cfg.batch_size, cfg.value_goal_ratios,
                          cfg.policy_goal_ratios, cfg.discount,
                          cfg.subgoal_steps, spec.goal_radius, rng)
    state, m = T.train_step(state, b)
    if i % (steps // 5) == 0:
        rep = E.evaluate(state, spec, spec.tasks, 10, np.random.default_rng([cfg.seed, 2, i]))
        print(f"step {i} ({time.time()-t0:.0f}s) td={m['td_loss']:.4f} "
              f"succ={rep.aggregate_success:.2f} kendall={rep.mean_kendall:.3f} "
              f"align={rep.mean_alignment:.3f} per-task={['%.1f' % s for s in rep.task_success]}",
              flush=True)
