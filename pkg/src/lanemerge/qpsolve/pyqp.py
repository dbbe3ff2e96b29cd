"""Pure-Python backend for the two-variable QP solver.

Same algorithm as the compiled extension (kept in lockstep, see
``_activeset.pyx``): test the unconstrained minimiser, then every single
active row, then every row pair, accepting the first candidate that is
primal feasible with nonnegative multipliers.  For a strictly convex cost
this candidate is the unique optimum; if no candidate qualifies the
problem is infeasible.  Exhaustive enumeration is exact and deterministic,
and cheap at this size (at most ~10 rows).
"""

from __future__ import annotations

FEAS_TOL = 1e-8
DUAL_TOL = -1e-10
SINGULAR_TOL = 1e-12


def solve_arrays(h, f, a, b, z_out, lam_out) -> int:
    """Solve min 0.5 z'Hz + f'z s.t. a z <= b; writes z_out (2) and
    lam_out (m).  Returns 0 optimal, 1 infeasible, 2 breakdown."""
    h00 = float(h[0, 0]); h01 = float(h[0, 1]); h11 = float(h[1, 1])
    f0 = float(f[0]); f1 = float(f[1])
    m = a.shape[0]

    det_h = h00 * h11 - h01 * h01
    if det_h <= SINGULAR_TOL or h00 <= 0.0:
        return 2

    rows0 = [float(a[i, 0]) for i in range(m)]
    rows1 = [float(a[i, 1]) for i in range(m)]
    rhs = [float(b[i]) for i in range(m)]
    for i in range(m):
        lam_out[i] = 0.0

    inv00 = h11 / det_h
    inv01 = -h01 / det_h
    inv11 = h00 / det_h

    def feasible(z0, z1):
        for i in range(m):
            if rows0[i] * z0 + rows1[i] * z1 > rhs[i] + FEAS_TOL:
                return False
        return True

    # unconstrained minimiser
    zu0 = -(inv00 * f0 + inv01 * f1)
    zu1 = -(inv01 * f0 + inv11 * f1)
    if feasible(zu0, zu1):
        z_out[0] = zu0
        z_out[1] = zu1
        return 0

    # one active row: z = zu - lam * Hinv a_i, lam = (a_i.zu - b_i)/(a_i.Hinv.a_i)
    for i in range(m):
        a0, a1 = rows0[i], rows1[i]
        s0 = inv00 * a0 + inv01 * a1
        s1 = inv01 * a0 + inv11 * a1
        denom = a0 * s0 + a1 * s1
        if denom <= SINGULAR_TOL:
            continue
        lam = (a0 * zu0 + a1 * zu1 - rhs[i]) / denom
        if lam < DUAL_TOL:
            continue
        z0 = zu0 - lam * s0
        z1 = zu1 - lam * s1
        if feasible(z0, z1):
            z_out[0] = z0
            z_out[1] = z1
            lam_out[i] = lam
            return 0

    # two active rows: z solves the 2x2 row system, multipliers from
    # stationarity H z + f + A_W' lam_W = 0
    for i in range(m):
        ai0, ai1 = rows0[i], rows1[i]
        for j in range(i + 1, m):
            aj0, aj1 = rows0[j], rows1[j]
            det_a = ai0 * aj1 - ai1 * aj0
            if abs(det_a) <= SINGULAR_TOL:
                continue
            z0 = (rhs[i] * aj1 - rhs[j] * ai1) / det_a
            z1 = (rhs[j] * ai0 - rhs[i] * aj0) / det_a
            g0 = -(h00 * z0 + h01 * z1 + f0)
            g1 = -(h01 * z0 + h11 * z1 + f1)
            # solve [ai aj]' lam = g  (columns are the two row normals)
            li = (g0 * aj1 - g1 * aj0) / det_a
            lj = (ai0 * g1 - ai1 * g0) / det_a
            if li < DUAL_TOL or lj < DUAL_TOL:
                continue
            if feasible(z0, z1):
                z_out[0] = z0
                z_out[1] = z1
                lam_out[i] = li
                lam_out[j] = lj
                return 0

    return 1
