"""Small dense QP solving with a compiled core and a pure-Python fallback.

The backend is selected at import time: the Cython extension when it built,
otherwise the pure-Python mirror.  Set ``LANEMERGE_QP_BACKEND=py`` (or
``c``) to force a choice; forcing ``c`` when the extension is missing
raises at import.
"""

from __future__ import annotations

import os

import numpy as np

from .dense import (
    BREAKDOWN, INFEASIBLE, OPTIMAL, DenseQp, QpResult, kkt_residuals,
)
from . import pyqp

_forced = os.environ.get("LANEMERGE_QP_BACKEND", "").strip().lower()
_ext = None
if _forced != "py":
    try:
        from . import _activeset as _ext
    except ImportError:
        _ext = None
        if _forced == "c":
            raise

if _ext is not None:
    BACKEND = "cython"
    _solve_arrays = _ext.solve_arrays
else:
    BACKEND = "python"
    _solve_arrays = pyqp.solve_arrays


def solve_qp(qp: DenseQp) -> QpResult:
    """Solve one dense QP exactly; see ``DenseQp`` for the convention."""
    z = np.zeros(2)
    lam = np.zeros(qp.a.shape[0])
    status = _solve_arrays(qp.h, qp.f, qp.a, qp.b, z, lam)
    return QpResult(z=z, status=status, lam=lam)


__all__ = [
    "BACKEND", "BREAKDOWN", "DenseQp", "INFEASIBLE", "OPTIMAL",
    "QpResult", "kkt_residuals", "solve_qp",
]
