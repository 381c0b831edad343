import os

# must run before numpy loads its BLAS: the suite's runtime contracts are
# single-core, and threaded BLAS is slower at these matrix sizes anyway
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
