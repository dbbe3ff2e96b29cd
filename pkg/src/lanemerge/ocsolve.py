"""Closed-form energy/time-optimal reference trajectories.

With a double integrator and a cost of (time weight) * duration plus the
integral of half the squared acceleration, the unconstrained optimum has a
linear control, quadratic speed and cubic position.  The four polynomial
coefficients and the free exit time satisfy five algebraic conditions:
initial speed, initial position, terminal position, zero terminal control,
and the transversality condition coupling the time weight to the terminal
coefficients.  They are solved here with a damped Newton iteration and an
analytic Jacobian.

Coefficients are stored in time measured from the start instant ``t0``;
evaluation accepts absolute time.  This keeps the polynomial conditioning
independent of how late in a long simulation the vehicle entered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coordinator import L1, CavRecord
from .scenario import ScenarioParams

RESIDUAL_TOL = 1e-8
STEP_TOL = 1e-10
_RESTART_SCALES = (1.0, 0.5, 2.0, 5.0, 0.2)


class SolveError(RuntimeError):
    """Newton iteration failed to converge; carries the final residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class UnconstrainedSolution:
    """Reference trajectory: u = a*s + b, with s = t - t0, valid to tm."""

    a: float
    b: float
    c: float
    d: float
    t0: float
    tm: float      # absolute exit time
    L: float
    v0: float
    beta: float

    @property
    def duration(self) -> float:
        return self.tm - self.t0

    def u(self, t: float) -> float:
        s = t - self.t0
        if s > self.duration:
            return 0.0
        return self.a * s + self.b

    def v(self, t: float) -> float:
        s = t - self.t0
        T = self.duration
        if s > T:
            return 0.5 * self.a * T * T + self.b * T + self.c
        return 0.5 * self.a * s * s + self.b * s + self.c

    def x(self, t: float) -> float:
        s = t - self.t0
        T = self.duration
        if s > T:
            return self.L + self.v(self.tm) * (s - T)
        return ((self.a * s / 6.0 + 0.5 * self.b) * s + self.c) * s + self.d

    def residuals(self) -> np.ndarray:
        """The five defining conditions evaluated at the stored solution."""
        return _system(np.array([self.a, self.b, self.c, self.d, self.duration]),
                       self.v0, self.L, self.beta)

    def energy(self) -> float:
        """Control effort integral of 0.5*u^2 over the trip, closed form."""
        a, b, T = self.a, self.b, self.duration
        if abs(a) < 1e-300:
            return 0.5 * b * b * T
        u_end = a * T + b
        return (u_end ** 3 - b ** 3) / (6.0 * a)

    def time_at_position(self, station: float) -> float:
        """Absolute time when the planned position reaches ``station``."""
        if station <= 0.0:
            return self.t0
        if station >= self.L:
            v_end = self.v(self.tm)
            if station > self.L and v_end > 0.0:
                return self.tm + (station - self.L) / v_end
            return self.tm
        lo, hi = 0.0, self.duration
        for _ in range(200):
            if hi - lo <= 1e-9:
                break
            mid = 0.5 * (lo + hi)
            if ((self.a * mid / 6.0 + 0.5 * self.b) * mid + self.c) * mid >= station:
                hi = mid
            else:
                lo = mid
        return self.t0 + 0.5 * (lo + hi)


def _system(z: np.ndarray, v0: float, L: float, beta: float) -> np.ndarray:
    a, b, c, d, T = z
    return np.array([
        c - v0,
        d,
        ((a * T / 6.0 + 0.5 * b) * T + c) * T + d - L,
        a * T + b,
        beta + 0.5 * a * a * T * T + a * b * T + a * c,
    ])


def _jacobian(z: np.ndarray, v0: float, L: float, beta: float) -> np.ndarray:
    a, b, c, d, T = z
    return np.array([
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [T ** 3 / 6.0, 0.5 * T * T, T, 1.0, 0.5 * a * T * T + b * T + c],
        [T, 1.0, 0.0, 0.0, a],
        [a * T * T + b * T + c, a * T, a, 0.0, a * a * T + a * b],
    ])


def solve_unconstrained(t0: float, v0: float, L: float,
                        beta: float) -> UnconstrainedSolution:
    """Solve the five trajectory conditions for one vehicle.

    Deterministic for fixed inputs: a fixed initial guess (constant-speed
    trip) with a fixed schedule of rescaled restarts on failure.
    """
    if v0 <= 0.0:
        raise SolveError("initial speed must be positive", float("inf"))
    if L <= 0.0:
        raise SolveError("terminal distance must be positive", float("inf"))
    if beta < 0.0:
        raise SolveError("time weight must be nonnegative", float("inf"))

    last_res = float("inf")
    for scale in _RESTART_SCALES:
        z = np.array([0.0, 0.0, v0, 0.0, scale * L / v0])
        z, res = _newton(z, v0, L, beta)
        if res < RESIDUAL_TOL and z[4] > 0.0:
            a, b, c, d, T = z
            return UnconstrainedSolution(
                a=float(a), b=float(b), c=float(c), d=float(d),
                t0=t0, tm=t0 + float(T), L=L, v0=v0, beta=beta)
        last_res = min(last_res, res)
    raise SolveError("trajectory solve did not converge", last_res)


def _newton(z: np.ndarray, v0: float, L: float, beta: float):
    f = _system(z, v0, L, beta)
    norm = float(np.max(np.abs(f)))
    for _ in range(100):
        if norm < RESIDUAL_TOL:
            break
        try:
            step = np.linalg.solve(_jacobian(z, v0, L, beta), -f)
        except np.linalg.LinAlgError:
            break
        # damping: backtrack until the residual norm decreases and the
        # exit-time component stays positive
        lam = 1.0
        improved = False
        for _ in range(40):
            cand = z + lam * step
            if cand[4] > 1e-9:
                f_cand = _system(cand, v0, L, beta)
                n_cand = float(np.max(np.abs(f_cand)))
                if n_cand < norm:
                    z, f, norm = cand, f_cand, n_cand
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            break
        if float(np.max(np.abs(lam * step))) < STEP_TOL:
            break
    return z, norm


def eval_trajectory(sol: UnconstrainedSolution, t: float) -> tuple[float, float, float]:
    """Planned (position, speed, acceleration) at absolute time ``t``.

    Past the exit time the trajectory continues at constant terminal speed
    with zero control.
    """
    return sol.x(t), sol.v(t), sol.u(t)


def terminal_length(record: CavRecord, params: ScenarioParams) -> float:
    """Total path length of the record's trip through the control zone."""
    if record.original_lane != L1 and record.exit_lane == "l1":
        return params.L3 + params.l_extra
    return params.L3
