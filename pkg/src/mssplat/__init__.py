"""Desk-scale Gaussian splatting with pyramid supervision and a sampling-based size floor."""

import os

# numba reads these once at import; PRISMGS_THREADS caps the worker pool
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
if os.environ.get("PRISMGS_THREADS", "").strip():
    os.environ["NUMBA_NUM_THREADS"] = str(max(1, int(os.environ["PRISMGS_THREADS"])))

__version__ = "0.1.0"
