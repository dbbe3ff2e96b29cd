# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the two-variable QP solver.

Kept in algorithmic lockstep with ``pyqp.solve_arrays``: unconstrained
minimiser, then single active rows, then row pairs; first KKT-consistent
candidate wins.  Returns 0 optimal, 1 infeasible, 2 breakdown.
"""

from libc.math cimport fabs

DEF MAX_ROWS = 16

cdef double FEAS_TOL = 1e-8
cdef double DUAL_TOL = -1e-10
cdef double SINGULAR_TOL = 1e-12


cdef inline bint _feasible(double z0, double z1, double* r0, double* r1,
                           double* rhs, Py_ssize_t m) noexcept:
    cdef Py_ssize_t i
    for i in range(m):
        if r0[i] * z0 + r1[i] * z1 > rhs[i] + FEAS_TOL:
            return 0
    return 1


def solve_arrays(double[:, ::1] h, double[::1] f, double[:, ::1] a,
                 double[::1] b, double[::1] z_out, double[::1] lam_out):
    cdef double h00 = h[0, 0], h01 = h[0, 1], h11 = h[1, 1]
    cdef double f0 = f[0], f1 = f[1]
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t i, j
    cdef double r0[MAX_ROWS]
    cdef double r1[MAX_ROWS]
    cdef double rhs[MAX_ROWS]
    cdef double det_h, inv00, inv01, inv11
    cdef double zu0, zu1, a0, a1, s0, s1, denom, lam, z0, z1
    cdef double ai0, ai1, aj0, aj1, det_a, g0, g1, li, lj

    if m > MAX_ROWS:
        return 2
    det_h = h00 * h11 - h01 * h01
    if det_h <= SINGULAR_TOL or h00 <= 0.0:
        return 2

    for i in range(m):
        r0[i] = a[i, 0]
        r1[i] = a[i, 1]
        rhs[i] = b[i]
        lam_out[i] = 0.0

    inv00 = h11 / det_h
    inv01 = -h01 / det_h
    inv11 = h00 / det_h

    zu0 = -(inv00 * f0 + inv01 * f1)
    zu1 = -(inv01 * f0 + inv11 * f1)
    if _feasible(zu0, zu1, r0, r1, rhs, m):
        z_out[0] = zu0
        z_out[1] = zu1
        return 0

    for i in range(m):
        a0 = r0[i]
        a1 = r1[i]
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
        if _feasible(z0, z1, r0, r1, rhs, m):
            z_out[0] = z0
            z_out[1] = z1
            lam_out[i] = lam
            return 0

    for i in range(m):
        ai0 = r0[i]
        ai1 = r1[i]
        for j in range(i + 1, m):
            aj0 = r0[j]
            aj1 = r1[j]
            det_a = ai0 * aj1 - ai1 * aj0
            if fabs(det_a) <= SINGULAR_TOL:
                continue
            z0 = (rhs[i] * aj1 - rhs[j] * ai1) / det_a
            z1 = (rhs[j] * ai0 - rhs[i] * aj0) / det_a
            g0 = -(h00 * z0 + h01 * z1 + f0)
            g1 = -(h01 * z0 + h11 * z1 + f1)
            li = (g0 * aj1 - g1 * aj0) / det_a
            lj = (ai0 * g1 - ai1 * g0) / det_a
            if li < DUAL_TOL or lj < DUAL_TOL:
                continue
            if _feasible(z0, z1, r0, r1, rhs, m):
                z_out[0] = z0
                z_out[1] = z1
                lam_out[i] = li
                lam_out[j] = lj
                return 0

    return 1
