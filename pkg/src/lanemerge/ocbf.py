"""Per-step control synthesis: barrier rows, references, and the QP.

Every state constraint (rear-end spacing, the gap-at-merge-point
constraints in their continuously differentiable form, and the speed
limits) maps to one linear inequality in the scalar control whose
satisfaction keeps the constraint set forward invariant.  A soft tracking
row drives the speed toward a position-corrected reference computed from
the vehicle's planned trajectory.  The assembled problem is a strictly
convex QP in (control, relaxation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coordinator import CavRecord, transform_position
from .decision import ConstraintAssignment
from .ocsolve import UnconstrainedSolution
from .qpsolve import DenseQp
from .scenario import MODE_CBF_ONLY, MODE_OCBF, ScenarioParams

X_FLOOR = 0.1  # position-feedback guard against the ratio singularity [m]

SRC_REAR_END = "rear_end"
SRC_ANCHOR = "rear_end_anchor"
SRC_MERGE_J = "merge_j"
SRC_MERGE_K = "merge_k"
SRC_V_MAX = "v_max"
SRC_V_MIN = "v_min"


@dataclass
class CbfConstraint:
    """One inequality ``coeff_u * u + rhs_free >= 0`` in the control, with
    the barrier value it protects attached for violation accounting."""

    coeff_u: float
    rhs_free: float
    source: str
    barrier: float


@dataclass
class ReferenceSignal:
    v_ref: float
    u_ref: float


@dataclass
class StepQp:
    """One controller step: cost beta*e^2 + 0.5*(u - u_ref)^2 subject to
    the barrier rows, the soft tracking row and the control box."""

    u_ref: float
    beta: float
    rows: list
    clf_coeff_u: float   # 2*(v - v_ref)
    clf_rhs: float       # -eps*(v - v_ref)^2
    u_min: float
    u_max: float

    def to_dense(self) -> DenseQp:
        m = len(self.rows)
        a = np.empty((m + 3, 2))
        b = np.empty(m + 3)
        for i, row in enumerate(self.rows):
            a[i, 0] = -row.coeff_u
            a[i, 1] = 0.0
            b[i] = row.rhs_free
        a[m] = (self.clf_coeff_u, -1.0)
        b[m] = self.clf_rhs
        a[m + 1] = (1.0, 0.0)
        b[m + 1] = self.u_max
        a[m + 2] = (-1.0, 0.0)
        b[m + 2] = -self.u_min
        h = np.array([[1.0, 0.0], [0.0, 2.0 * self.beta]])
        f = np.array([-self.u_ref, 0.0])
        return DenseQp(h=h, f=f, a=a, b=b)


RECOVERY_SLOPE_REAR = 1.0
RECOVERY_SLOPE_MERGE = 10.0


def classk(params: ScenarioParams, value: float,
           recovery_slope: float = RECOVERY_SLOPE_REAR) -> float:
    """Cubic class-K function applied to every barrier value.

    The cubic is defined on the class-K domain (nonnegative barriers).
    Negative barrier values are reachable only through discrete stepping
    and process noise; there the function extends linearly so a deficit
    decays at a fixed exponential rate instead of the cubic's vanishing
    rate near zero.  Gap rows pinned to merge-point crossings use a
    steeper recovery so deficits clear before the crossing instant.
    """
    if value >= 0.0:
        return params.classk_gain * value ** 3
    return params.classk_gain * recovery_slope * value


def phi_p(x: float, l_p: float, v0: float, params: ScenarioParams) -> float:
    """Gap-time coefficient interpolated along the approach to an MP.

    Rises linearly from ``-delta/v0`` at the origin to the full reaction
    time at the merge-point station ``l_p``, so the gap requirement
    tightens into the plain rear-end form exactly at the crossing.
    """
    if v0 <= 0.0:
        raise ValueError("phi_p undefined for v0 <= 0")
    return (params.phi + params.delta / v0) * x / l_p - params.delta / v0


def phi_p_slope(l_p: float, v0: float, params: ScenarioParams) -> float:
    return (params.phi + params.delta / v0) / l_p


def rear_end_row(x_i, v_i, x_other, v_other, params,
                 source=SRC_REAR_END) -> CbfConstraint:
    gap = x_other - x_i
    barrier = gap - params.phi * v_i - params.delta
    rhs = (v_other - v_i) + classk(params, barrier)
    return CbfConstraint(coeff_u=-params.phi, rhs_free=rhs,
                         source=source, barrier=barrier)


def merge_row_active(x_i, v_i, x_other, station, params) -> bool:
    """Whether the gap row against this partner still governs.

    The row owns the approach to the shared station; past it the row stays
    on (the interpolation keeps tightening) until the plain rear-end form
    holds, at which point the partner hands over as an ordinary
    predecessor with its constraint already satisfied.
    """
    if x_i <= station:
        return True
    return (x_other - x_i) - params.phi * v_i - params.delta < 0.0


def merge_row(x_i, v_i, x_other, v_other, l_p, v0, params, source) -> CbfConstraint:
    gap = x_other - x_i
    coeff = phi_p(x_i, l_p, v0, params)
    near_window = params.phi * params.v_max + params.delta
    if coeff >= params.phi or l_p <= near_window:
        # the row saturates into the plain rear-end form: past the
        # merge-point station always, and over the whole approach when the
        # station is so close to the origin that the interpolation has no
        # room to act (admission guarantees the full gap at birth there)
        coeff, slope = params.phi, 0.0
    else:
        slope = phi_p_slope(l_p, v0, params)
    barrier = gap - coeff * v_i - params.delta
    rhs = (v_other - v_i) - slope * v_i * v_i \
        + classk(params, barrier, recovery_slope=RECOVERY_SLOPE_MERGE)
    return CbfConstraint(coeff_u=-coeff, rhs_free=rhs,
                         source=source, barrier=barrier)


def build_cbf_rows(me_state, assignment: ConstraintAssignment,
                   neighbor_states: dict, params: ScenarioParams) -> list:
    """Barrier rows for one vehicle given already-transformed neighbours.

    ``me_state`` is ``(x, v, v0)``; ``neighbor_states`` maps ``"ip"``,
    ``"j"`` and ``"k"`` to transformed ``(x, v)`` pairs for the partners
    present in the assignment.  Gap rows for j/k are emitted only while the
    subject is still short of the corresponding merge-point station.
    Control bounds live in the QP box, not here.
    """
    x_i, v_i, v0 = me_state
    rows = []
    if assignment.ip is not None and "ip" in neighbor_states:
        xo, vo = neighbor_states["ip"]
        rows.append(rear_end_row(x_i, v_i, xo, vo, params))
    if assignment.anchor is not None and "anchor" in neighbor_states:
        xo, vo = neighbor_states["anchor"]
        rows.append(rear_end_row(x_i, v_i, xo, vo, params, source=SRC_ANCHOR))
    if assignment.j is not None and "j" in neighbor_states and assignment.mp_for_j:
        _, station = assignment.mp_for_j
        xo, vo = neighbor_states["j"]
        if merge_row_active(x_i, v_i, xo, station, params):
            rows.append(merge_row(x_i, v_i, xo, vo, station, v0, params, SRC_MERGE_J))
    if assignment.k is not None and "k" in neighbor_states and assignment.mp_for_k:
        _, station = assignment.mp_for_k
        xo, vo = neighbor_states["k"]
        if merge_row_active(x_i, v_i, xo, station, params):
            rows.append(merge_row(x_i, v_i, xo, vo, station, v0, params, SRC_MERGE_K))
    b_vmax = params.v_max - v_i
    rows.append(CbfConstraint(coeff_u=-1.0, rhs_free=classk(params, b_vmax),
                              source=SRC_V_MAX, barrier=b_vmax))
    b_vmin = v_i - params.v_min
    rows.append(CbfConstraint(coeff_u=1.0, rhs_free=classk(params, b_vmin),
                              source=SRC_V_MIN, barrier=b_vmin))
    return rows


def reference(me_state, sol: UnconstrainedSolution, t: float, mode: str,
              params: ScenarioParams) -> ReferenceSignal:
    """Speed/acceleration reference for the tracking row.

    Normal mode scales the planned values by the planned-to-actual position
    ratio, which feeds position error back into the speed target; below a
    small position floor the raw planned values are used.  The aggressive
    mode ignores the plan and simply asks for the speed limit.
    """
    if mode == MODE_CBF_ONLY:
        return ReferenceSignal(v_ref=params.v_max, u_ref=0.0)
    x_i = me_state[0]
    xs, vs, us = sol.x(t), sol.v(t), sol.u(t)
    if x_i < X_FLOOR:
        return ReferenceSignal(v_ref=vs, u_ref=us)
    ratio = xs / x_i
    return ReferenceSignal(v_ref=ratio * vs, u_ref=ratio * us)


def neighbor_view(me: CavRecord, assignment: ConstraintAssignment,
                  params: ScenarioParams) -> dict:
    """Partner positions expressed in the subject's lane coordinate."""
    out = {}
    for key in ("ip", "j", "k", "anchor"):
        other = getattr(assignment, key)
        if other is None:
            continue
        if key == "anchor" and assignment.ip is not None \
                and other.uid == assignment.ip.uid:
            continue  # anchor already covered by the rear-end row
        x_t = transform_position(me.original_lane, other.original_lane,
                                 other.x, params.l_extra)
        out[key] = (x_t, other.v)
    return out


def build_step_qp(me: CavRecord, assignment: ConstraintAssignment,
                  sol: UnconstrainedSolution, t: float,
                  params: ScenarioParams, mode: str = MODE_OCBF) -> StepQp:
    """Assemble the per-step QP for one vehicle from a consistent snapshot."""
    ref = reference((me.x, me.v), sol, t, mode, params)
    neighbors = neighbor_view(me, assignment, params)
    rows = build_cbf_rows((me.x, me.v, me.v_arrive), assignment, neighbors, params)
    dv = me.v - ref.v_ref
    return StepQp(
        u_ref=ref.u_ref, beta=params.beta, rows=rows,
        clf_coeff_u=2.0 * dv, clf_rhs=-params.eps_clf * dv * dv,
        u_min=params.u_min, u_max=params.u_max,
    )
