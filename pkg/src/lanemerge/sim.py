"""Fixed-step simulation engine.

Per step: every active vehicle builds and solves its QP against the same
pre-step snapshot (so results do not depend on evaluation order), controls
are applied with forward Euler plus optional zero-order-hold noise, and
events are then dispatched in a fixed order: exits (with queue
renumbering), first-merge-point passes (lane changes / queue drops), and
overtake row reordering.  Arrivals are Poisson per road, split evenly
across the road's two lanes, and are held at the origin until spawning
them satisfies the rear-end gap against the last vehicle in their lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import coordinator as coord
from . import decision, ocbf, ocsolve
from .coordinator import CavRecord, QueueTables
from .qpsolve import BREAKDOWN, INFEASIBLE, solve_qp
from .scenario import MODE_CBF_ONLY, MODE_OCBF, ConfigError, ScenarioParams, SimConfig

ROAD_MAIN = "main"
ROAD_MERGE = "merge"
_ROAD_LANES = {ROAD_MAIN: (coord.L1, coord.L2_LANE),
               ROAD_MERGE: (coord.L3_LANE, coord.L4_LANE)}


class SimulationError(RuntimeError):
    """Unrecoverable numerical breakdown inside a run."""


@dataclass
class NoiseModel:
    """Uniform, per-step, zero-order-hold process noise on both channels."""

    w1_bound: float
    w2_bound: float
    enabled: bool
    rng_w1: np.random.Generator
    rng_w2: np.random.Generator

    def draw(self) -> tuple[float, float]:
        if not self.enabled:
            return 0.0, 0.0
        w1 = float(self.rng_w1.uniform(-self.w1_bound, self.w1_bound))
        w2 = float(self.rng_w2.uniform(-self.w2_bound, self.w2_bound))
        return w1, w2


@dataclass
class VehicleSummary:
    uid: int
    index: int
    original_lane: str
    exit_lane: str
    mp_first: str
    mp_second: str
    t0: float
    tm: float
    travel_time: float
    energy: float
    objective: float


@dataclass
class Metrics:
    """Per-vehicle outcomes plus running aggregates and violation logs."""

    beta: float
    vehicles: list = field(default_factory=list)
    series: list = field(default_factory=list)        # (t, avg_time, avg_energy)
    violations: list = field(default_factory=list)    # (t, uid, source, magnitude)
    crossings: list = field(default_factory=list)     # (t, uid, mp, partner, margin)
    infeasible_events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)     # (t, table dump text)
    vehicle_steps: int = 0
    soft_violation_steps: int = 0                     # steps with min barrier < -0.1
    _sum_time: float = 0.0
    _sum_energy: float = 0.0

    def record_exit(self, rec: CavRecord, objective: float) -> None:
        s = VehicleSummary(
            uid=rec.uid, index=rec.index, original_lane=rec.original_lane,
            exit_lane=rec.exit_lane, mp_first=rec.mp_first or "-",
            mp_second=rec.mp_second, t0=rec.t_arrive, tm=rec.t_exit,
            travel_time=rec.t_exit - rec.t_arrive, energy=rec.energy,
            objective=objective)
        self.vehicles.append(s)
        self._sum_time += s.travel_time
        self._sum_energy += s.energy
        n = len(self.vehicles)
        self.series.append((rec.t_exit, self._sum_time / n, self._sum_energy / n))

    @property
    def count(self) -> int:
        return len(self.vehicles)

    @property
    def avg_travel_time(self) -> float:
        return self._sum_time / len(self.vehicles) if self.vehicles else 0.0

    @property
    def avg_energy(self) -> float:
        return self._sum_energy / len(self.vehicles) if self.vehicles else 0.0

    @property
    def avg_objective(self) -> float:
        if not self.vehicles:
            return 0.0
        return sum(v.objective for v in self.vehicles) / len(self.vehicles)

    def recompute_averages(self) -> tuple[float, float, float]:
        """Aggregates recomputed from the per-vehicle log (cross-check)."""
        if not self.vehicles:
            return 0.0, 0.0, 0.0
        n = len(self.vehicles)
        return (sum(v.travel_time for v in self.vehicles) / n,
                sum(v.energy for v in self.vehicles) / n,
                sum(v.objective for v in self.vehicles) / n)

    # -- tabular text emission ----------------------------------------------
    def vehicles_table(self) -> str:
        lines = ["uid\tindex\torig\texit\tmp1\tmp2\tt0\ttm\ttravel\tenergy\tobjective"]
        for v in self.vehicles:
            lines.append(
                f"{v.uid}\t{v.index}\t{v.original_lane}\t{v.exit_lane}\t"
                f"{v.mp_first}\t{v.mp_second}\t{v.t0:.4f}\t{v.tm:.4f}\t"
                f"{v.travel_time:.6f}\t{v.energy:.6f}\t{v.objective:.6f}")
        return "\n".join(lines) + "\n"

    def series_table(self) -> str:
        lines = ["t\tavg_travel_time\tavg_energy"]
        for t, a, e in self.series:
            lines.append(f"{t:.4f}\t{a:.6f}\t{e:.6f}")
        return "\n".join(lines) + "\n"

    def violations_table(self) -> str:
        lines = ["t\tuid\tsource\tmagnitude"]
        for t, uid, source, mag in self.violations:
            lines.append(f"{t:.4f}\t{uid}\t{source}\t{mag:.6f}")
        return "\n".join(lines) + "\n"

    def crossings_table(self) -> str:
        lines = ["t\tuid\tmp\tpartner_uid\tmargin"]
        for t, uid, mp, partner, margin in self.crossings:
            lines.append(f"{t:.4f}\t{uid}\t{mp}\t{partner}\t{margin:.6f}")
        return "\n".join(lines) + "\n"


def generate_arrivals(config: SimConfig, rng: np.random.Generator) -> list:
    """Arrival stream for one run: sorted (t, road, lane, v0) tuples.

    Exponential inter-arrival times per road; each arrival lands on one of
    the road's two lanes with equal probability; initial speeds are uniform
    on the configured range.  Deterministic for a fixed generator state.
    """
    arrivals = []
    for road, rate_per_hour in ((ROAD_MAIN, config.arrival_rate_main),
                                (ROAD_MERGE, config.arrival_rate_merge)):
        rate = rate_per_hour / 3600.0
        lanes = _ROAD_LANES[road]
        t = 0.0
        while True:
            t += rng.exponential(1.0 / rate)
            if t >= config.horizon:
                break
            lane = lanes[int(rng.integers(0, 2))]
            v0 = float(rng.uniform(config.v0_low, config.v0_high))
            arrivals.append((t, road, lane, v0))
    arrivals.sort(key=lambda a: a[0])
    return arrivals


class World:
    """Mutable run state: tables, pending arrivals, metrics, RNG streams."""

    def __init__(self, params: ScenarioParams, config: SimConfig,
                 snapshot_interval: float | None = None):
        params.validate()
        config.validate(params)
        if params.beta <= 0.0:
            raise ConfigError("beta must be > 0 to run the controller")
        self.params = params
        self.config = config
        self.mode = config.controller_mode
        self.tables = QueueTables(params)
        self.t = 0.0
        self.step_index = 0
        self.metrics = Metrics(beta=params.beta)
        seq = np.random.SeedSequence(config.rng_seed)
        arr_seed, noise1_seed, noise2_seed = seq.spawn(3)
        self.noise = NoiseModel(
            w1_bound=config.w1_bound, w2_bound=config.w2_bound,
            enabled=config.noise_enabled,
            rng_w1=np.random.default_rng(noise1_seed),
            rng_w2=np.random.default_rng(noise2_seed))
        self.pending = generate_arrivals(config, np.random.default_rng(arr_seed))
        self.next_arrival = 0
        self.held: dict[str, list] = {lane: [] for lanes in _ROAD_LANES.values()
                                      for lane in lanes}
        self.spawned = 0
        self.snapshot_interval = snapshot_interval
        self.snapshots: list[tuple[float, str]] = []
        self._ip_cache: dict[int, tuple[int, CavRecord | None]] = {}
        if snapshot_interval is not None:
            self.snapshots.append((0.0, self.tables.dump()))

    # -- helpers -------------------------------------------------------------
    def active_records(self) -> list[CavRecord]:
        """Controllable vehicles in spawn order (stable across row swaps)."""
        recs = [r for r in self.tables.records() if not r.exited]
        recs.sort(key=lambda r: r.uid)
        return recs

    def _last_in_lane(self, lane: str) -> CavRecord | None:
        """Vehicle in ``lane`` closest to its origin (smallest position)."""
        best = None
        for r in self.tables.records():
            if r.exited or r.current_lane != lane:
                continue
            if best is None or r.x < best.x:
                best = r
        return best

    def _resolve_ip(self, rec: CavRecord) -> CavRecord | None:
        """Rear-end predecessor, excluding partners still covered by an
        active gap row (the interpolated row owns the approach and hands
        over, already satisfied, once the rear-end form holds)."""
        p = self.params
        asg = rec.assignment
        exclude = set()
        for other, mp in ((asg.j, asg.mp_for_j), (asg.k, asg.mp_for_k)):
            if other is None or not mp:
                continue
            x_t = coord.transform_position(rec.original_lane,
                                           other.original_lane, other.x,
                                           p.l_extra)
            if ocbf.merge_row_active(rec.x, rec.v, x_t, mp[1], p):
                exclude.add(other.uid)
        key = (self.tables.version, tuple(sorted(exclude)))
        cached = self._ip_cache.get(rec.uid)
        if cached is not None and cached[0] == key:
            return cached[1]
        ip = decision.resolve_ip(self.tables, rec, frozenset(exclude))
        self._ip_cache[rec.uid] = (key, ip)
        return ip

    # -- arrivals ------------------------------------------------------------
    def _admit_arrivals(self) -> None:
        while (self.next_arrival < len(self.pending)
               and self.pending[self.next_arrival][0] <= self.t):
            _, road, lane, v0 = self.pending[self.next_arrival]
            self.held[lane].append(v0)
            self.next_arrival += 1
        for lane, queue in self.held.items():
            while queue:
                v0 = queue[0]
                exit_lane = self._tentative_exit(lane)
                if not self._spawn_gap_ok(lane, exit_lane, v0):
                    break
                self._spawn(lane, v0, exit_lane)
                queue.pop(0)

    def _tentative_exit(self, lane: str) -> str:
        if lane == coord.L1:
            return coord.EXIT_L1
        if lane == coord.L4_LANE:
            return coord.EXIT_L2
        pick = decision.choose_exit_lane(self.tables.n1, self.tables.n2)
        return coord.EXIT_L1 if pick == "S1" else coord.EXIT_L2

    def _spawn_gap_ok(self, lane: str, exit_lane: str, v0: float) -> bool:
        """Rear-end gap holds at birth against everyone the newborn will
        immediately face: vehicles in its lane, plus lane-changers whose
        merge-in point sits within the near-origin window (too little road
        left there for the interpolated gap constraint to act)."""
        p = self.params
        need = p.phi * v0 + p.delta
        near_window = p.phi * p.v_max + p.delta
        for r in self.tables.records():
            if r.exited:
                continue
            z = coord.transform_position(lane, r.original_lane, r.x, p.l_extra)
            if r.current_lane == lane and z < need:
                return False
            if lane == coord.L1 and not r.passed_first_mp \
                    and r.mp_first == coord.MP_VAR:
                station = r.mp_first_station - p.l_extra
                if station <= near_window and z < need:
                    return False
            if lane == coord.L2_LANE and exit_lane == coord.EXIT_L1:
                # the switcher's own merge-in station may be close to the
                # origin, so everyone already bound for lane 1 counts as
                # an immediate-facing vehicle
                if r.exit_lane == coord.EXIT_L1 and z < need:
                    return False
        return True

    def _spawn(self, lane: str, v0: float, exit_lane: str) -> None:
        p = self.params
        t0 = self.t
        merge_decision = exit_lane if lane in (coord.L2_LANE, coord.L3_LANE) else None
        l_i1 = None
        length = (p.L3 + p.l_extra
                  if lane != coord.L1 and exit_lane == coord.EXIT_L1 else p.L3)
        sol = ocsolve.solve_unconstrained(t0, v0, length, p.beta)
        if lane == coord.L2_LANE and merge_decision == coord.EXIT_L1:
            pred = self._last_in_lane(coord.L2_LANE)
            l_i1 = decision.compute_merge_point(
                sol, pred.sol if pred is not None else None, p)
        rec = self.tables.assign_arrival(lane, t0, v0, merge_decision, l_i1)
        rec.sol = sol
        rec.assignment = decision.match_constraints(self.tables, rec)
        # a lane-1 arrival inherits a first-MP column from a variable-point
        # gap partner (pure bookkeeping; matching ignores acquired labels)
        if rec.original_lane == coord.L1:
            for mp in (rec.assignment.mp_for_j, rec.assignment.mp_for_k):
                if mp and mp[0] == coord.MP_VAR:
                    rec.mp_first, rec.mp_first_station = mp
                    break
            else:
                for other in (rec.assignment.j, rec.assignment.k):
                    if other is not None and other.mp_first == coord.MP_VAR \
                            and not other.passed_first_mp:
                        rec.mp_first = coord.MP_VAR
                        rec.mp_first_station = coord.transform_position(
                            coord.L1, other.original_lane,
                            other.mp_first_station, p.l_extra)
                        break
        self.spawned += 1

    # -- stepping ------------------------------------------------------------
    def step(self) -> None:
        p = self.params
        dt = p.dt
        self._admit_arrivals()
        active = self.active_records()

        # phase 1: controls from the common pre-step snapshot
        live_uids = {r.uid for r in self.tables.records()}
        controls = []
        for rec in active:
            asg = rec.assignment
            # gap partners purged from the tables have cleared the zone
            # (two exits ago); their rows are slack and their state is no
            # longer tracked, so the constraints drop permanently
            if asg.j is not None and asg.j.uid not in live_uids:
                asg.j = None
            if asg.k is not None and asg.k.uid not in live_uids:
                asg.k = None
            if asg.anchor is not None and asg.anchor.uid not in live_uids:
                asg.anchor = None
            asg.ip = self._resolve_ip(rec)
            qp = ocbf.build_step_qp(rec, rec.assignment, rec.sol, self.t, p,
                                    mode=self.mode)
            res = solve_qp(qp.to_dense())
            if res.status == BREAKDOWN:
                raise SimulationError(
                    f"QP breakdown for vehicle uid={rec.uid} at t={self.t:.2f}")
            if res.status == INFEASIBLE:
                u = p.u_min
                self.metrics.infeasible_events.append((self.t, rec.uid))
            else:
                u = float(res.z[0])
            controls.append((rec, u, qp.rows))

        # violation accounting against the state the QP saw
        for rec, _, rows in controls:
            self.metrics.vehicle_steps += 1
            min_b = 0.0
            for row in rows:
                if row.barrier < min_b:
                    min_b = row.barrier
                if row.barrier < 0.0:
                    self.metrics.violations.append(
                        (self.t, rec.uid, row.source, row.barrier))
            if min_b < -0.1:
                self.metrics.soft_violation_steps += 1

        # phase 2: integrate everyone (exited rows coast at constant speed)
        for rec in self.tables.records():
            rec.x_prev, rec.v_prev = rec.x, rec.v
        for rec, u, _ in controls:
            w1, w2 = self.noise.draw()
            rec.x += (rec.v + w1) * dt
            rec.v += (u + w2) * dt
            if rec.v < p.v_min:
                rec.v = p.v_min
            elif rec.v > p.v_max:
                rec.v = p.v_max
            e_next = rec.energy + 0.25 * (rec.u * rec.u + u * u) * dt
            rec.u, rec.energy = u, e_next
        for rec in self.tables.records():
            if rec.exited:
                rec.x += rec.v * dt

        self.step_index += 1
        self.t = self.step_index * dt
        self._dispatch_events(active)
        if (self.snapshot_interval is not None
                and self.step_index % max(1, round(self.snapshot_interval / dt)) == 0):
            self.snapshots.append((self.t, self.tables.dump()))

    def _dispatch_events(self, active: list) -> None:
        p = self.params
        # exits first: renumbering must precede predecessor re-resolution
        exiters = []
        for rec in active:
            if not rec.exited and rec.x >= rec.sol.L:
                exiters.append(rec)
        for rec in exiters:
            self._log_crossing(rec, rec.mp_second, rec.mp_second_station)
            rec.t_exit = self.t
            objective = p.beta * (rec.t_exit - rec.t_arrive) + rec.energy
            self.metrics.record_exit(rec, objective)
            self.tables.on_exit(rec, self.t)

        # first-MP passes and lane changes
        for rec in active:
            if rec.exited or rec.passed_first_mp:
                continue
            if rec.original_lane in (coord.L2_LANE, coord.L3_LANE) \
                    and rec.mp_first_station is not None \
                    and rec.x >= rec.mp_first_station:
                self._log_crossing(rec, rec.mp_first, rec.mp_first_station)
                self.tables.on_first_mp_pass(rec)
            elif rec.original_lane == coord.L1 \
                    and rec.mp_first_station is not None \
                    and rec.mp_first not in rec.t_mp \
                    and rec.x >= rec.mp_first_station:
                # acquired conflict point on lane 1: log only, no table event
                self._log_crossing(rec, rec.mp_first, rec.mp_first_station)

        # second-MP crossings ahead of the exit line (lane-1 paths)
        for rec in active:
            if rec.exited or rec.mp_second in rec.t_mp:
                continue
            if rec.x >= rec.mp_second_station:
                self._log_crossing(rec, rec.mp_second, rec.mp_second_station)

        # overtake reorder for each exiter
        for rec in exiters:
            self.tables.on_overtake(rec)

    def _log_crossing(self, rec: CavRecord, mp: str | None, station: float) -> None:
        """Record the gap margin against the assigned partner at the
        instant the subject's position reached the station (states are
        interpolated inside the step that detected the crossing)."""
        if mp is None or mp in rec.t_mp:
            return
        asg = rec.assignment
        dx = rec.x - rec.x_prev
        theta = (station - rec.x_prev) / dx if dx > 0.0 else 1.0
        theta = min(max(theta, 0.0), 1.0)
        t_cross = self.t - (1.0 - theta) * self.params.dt
        rec.t_mp[mp] = t_cross
        partner = None
        if asg is not None:
            if asg.mp_for_j and asg.mp_for_j[0] == mp and asg.j is not None:
                partner = asg.j
            elif asg.mp_for_k and asg.mp_for_k[0] == mp and asg.k is not None:
                partner = asg.k
        if partner is None:
            return
        if partner not in self.tables.s1 and partner not in self.tables.s2:
            return  # partner fully purged; its state is no longer tracked
        xo = partner.x_prev + theta * (partner.x - partner.x_prev)
        x_other = coord.transform_position(
            rec.original_lane, partner.original_lane, xo, self.params.l_extra)
        v_cross = rec.v_prev + theta * (rec.v - rec.v_prev)
        margin = (x_other - station) - self.params.phi * v_cross - self.params.delta
        self.metrics.crossings.append((t_cross, rec.uid, mp, partner.uid, margin))

    def run(self) -> Metrics:
        steps = int(round(self.config.horizon / self.params.dt))
        for _ in range(steps):
            self.step()
        return self.metrics


def run(params: ScenarioParams, config: SimConfig,
        snapshot_interval: float | None = None) -> Metrics:
    """Simulate ``config.horizon`` seconds and return the metrics bundle."""
    world = World(params, config, snapshot_interval=snapshot_interval)
    metrics = world.run()
    metrics.snapshots = world.snapshots
    return metrics
