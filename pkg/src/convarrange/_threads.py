"""BLAS thread-pool cap, applied before numpy can load its backend.

CONVARRANGE_THREADS=N seeds OMP/OpenBLAS/MKL thread counts unless the caller
already pinned them. Must run before the first `import numpy` in the process;
the package __init__ calls it as its first statement.
"""

import os
import sys

_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def apply_thread_cap() -> None:
    cap = os.environ.get("CONVARRANGE_THREADS")
    if not cap:
        return
    if "numpy" in sys.modules:
        return  # too late to matter; BLAS pools are already sized
    for var in _VARS:
        os.environ.setdefault(var, cap)
