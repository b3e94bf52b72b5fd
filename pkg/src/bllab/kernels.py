"""Backend selection for the batched fixed-point solver.

The compiled extension is used when importable; ``BLLAB_BACKEND=python``
forces the numpy fallback.
"""
import os

from . import _kernel_py

_forced = os.environ.get("BLLAB_BACKEND", "").lower()

if _forced == "python":
    solve_batch = _kernel_py.solve_batch
    BACKEND = "python"
else:
    try:
        from ._kernel import solve_batch  # noqa: F401
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        solve_batch = _kernel_py.solve_batch
        BACKEND = "python"

CONVERGED, DIVERGED, MAX_ITER = _kernel_py.CONVERGED, _kernel_py.DIVERGED, _kernel_py.MAX_ITER
STATUS_NAMES = {CONVERGED: "converged", DIVERGED: "diverged-to-infinity", MAX_ITER: "max-iterations"}


def threads() -> int:
    """Worker cap from BL_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("BL_THREADS", "1")))
    except ValueError:
        return 1
