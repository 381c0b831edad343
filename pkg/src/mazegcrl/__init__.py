"""Offline goal-conditioned RL on point mazes.

Library layout:

- ``autodiff``: reverse-mode tape, dense nets, Adam, finite differences
- ``maze``: deterministic point-mass maze environments and the BFS oracle
- ``data``: offline dataset collection and goal-sampling distributions
- ``values``: the five interchangeable value parameterizations
- ``training``: expectile TD, continuity regularization, AWR policy losses
- ``evaluation``: rollouts, order-consistency and landscape diagnostics
- ``cli``: experiment orchestration (gen-data / train / eval / ablate / landscape)
"""

import os

# Desk-scale matrices lose to BLAS thread-sync overhead, and the runtime
# contract is single-core; effective only if numpy is not yet loaded and
# the user has not chosen otherwise.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
del os, _var

__version__ = "0.1.0"
