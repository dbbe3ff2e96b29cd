"""Problem container and result types for the per-step dense QPs.

Each controller step produces one strictly convex QP in two variables
(control and tracking relaxation) with a handful of linear inequality
rows.  Problems this small are solved exactly by enumerating candidate
active sets; see the backend modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = 0
INFEASIBLE = 1
BREAKDOWN = 2

STATUS_NAMES = {OPTIMAL: "optimal", INFEASIBLE: "infeasible", BREAKDOWN: "breakdown"}


@dataclass
class DenseQp:
    """min 0.5 z'Hz + f'z  s.t.  A z <= b, with z in R^2 and H positive
    definite.  ``a`` may be empty; row count is expected to stay small."""

    h: np.ndarray
    f: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.h = np.ascontiguousarray(self.h, dtype=np.float64).reshape(2, 2)
        self.f = np.ascontiguousarray(self.f, dtype=np.float64).reshape(2)
        self.a = np.ascontiguousarray(self.a, dtype=np.float64).reshape(-1, 2)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64).reshape(-1)
        if self.a.shape[0] != self.b.shape[0]:
            raise ValueError("row count mismatch between a and b")


@dataclass
class QpResult:
    z: np.ndarray
    status: int
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def status_name(self) -> str:
        return STATUS_NAMES.get(self.status, "unknown")

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def kkt_residuals(qp: DenseQp, z: np.ndarray, lam: np.ndarray) -> dict:
    """Stationarity, primal feasibility and complementarity residuals."""
    grad = qp.h @ z + qp.f
    if qp.a.size:
        grad = grad + qp.a.T @ lam
        slack = qp.a @ z - qp.b
        primal = float(np.max(slack)) if slack.size else 0.0
        comp = float(np.max(np.abs(lam * slack))) if slack.size else 0.0
        dual = float(np.min(lam)) if lam.size else 0.0
    else:
        primal, comp, dual = 0.0, 0.0, 0.0
    return {
        "stationarity": float(np.max(np.abs(grad))),
        "primal": primal,
        "complementarity": comp,
        "dual_min": dual,
    }
