"""Lane decision, variable merge-point location and constraint matching.

A new arrival resolves, once, the set of neighbours whose spacing it must
maintain: the physically preceding vehicle ``ip`` (rear-end constraint) and
up to two gap partners ``j`` and ``k`` pinned to merge-point crossings.
Matching happens by a bottom-up scan of the arrival's exit-lane queue,
comparing the (original lane, first MP, second MP) columns; the scan stops
at the first row that satisfies any of four cases.
"""

from __future__ import annotations

from dataclasses import dataclass

from .coordinator import (
    L1, MP2, MP_VAR, CavRecord, QueueTables, transform_position,
)
from .scenario import ScenarioParams

CASE1, CASE2, CASE3, CASE4, NO_CASE = "case1", "case2", "case3", "case4", "none"


def choose_exit_lane(n1: int, n2: int) -> str:
    """Shortest-queue-first exit decision; ties go to the lane-2 queue."""
    if n1 < 0 or n2 < 0:
        raise ValueError("queue counts must be nonnegative")
    return "S1" if n1 < n2 else "S2"


@dataclass
class ConstraintAssignment:
    """Resolved neighbours and which gap constraints apply.

    ``mp_for_j`` / ``mp_for_k`` give (mp kind, station in the subject's own
    coordinate); the gap constraint against that partner applies until the
    subject crosses the station.  ``redundant_k`` flags k coinciding with
    the rear-end predecessor (the row is kept).
    """

    ip: CavRecord | None = None
    j: CavRecord | None = None
    k: CavRecord | None = None
    matched_case: str = NO_CASE
    mp_for_j: tuple[str, float] | None = None
    mp_for_k: tuple[str, float] | None = None
    redundant_k: bool = False
    # the matched row of a pure car-following match: it precedes the
    # subject all the way through the zone, so its rear-end pairing
    # persists even while the two are on different stretches mid-change
    anchor: CavRecord | None = None


def compute_merge_point(sol_i, sol_ip, params: ScenarioParams) -> float:
    """Station where an l2 arrival bound for l1 should change lanes.

    The change happens where the rear-end gap against the lane-2
    predecessor (both on their planned trajectories) first shrinks to the
    speed-dependent minimum.  If there is no predecessor, or the gap never
    reaches the minimum before the mid merge point, the change is deferred
    to the mid merge point station.
    """
    L2 = params.L2
    if sol_ip is None:
        return L2
    t0 = sol_i.t0
    t_m2 = sol_i.time_at_position(L2)

    def residual(t: float) -> float:
        return (sol_ip.x(t) - sol_i.x(t)
                - params.phi * sol_i.v(t) - params.delta)

    # bracket the first sign change on a control-step grid, then bisect
    step = params.dt
    t_lo, r_lo = t0, residual(t0)
    if r_lo <= 0.0:
        return max(min(sol_i.x(t0), L2), 1e-9)
    t_hit = None
    t = t0 + step
    while t < t_m2 + step:
        t_cur = min(t, t_m2)
        r_cur = residual(t_cur)
        if r_cur <= 0.0:
            t_hit = (t_lo, t_cur)
            break
        t_lo, r_lo = t_cur, r_cur
        if t_cur >= t_m2:
            break
        t += step
    if t_hit is None:
        return L2
    lo, hi = t_hit
    for _ in range(200):
        if hi - lo <= 1e-6:
            break
        mid = 0.5 * (lo + hi)
        if residual(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    station = sol_i.x(0.5 * (lo + hi))
    return max(min(station, L2), 1e-9)


def _mp1_matches(me: CavRecord, row: CavRecord) -> bool:
    """First-MP column comparison.

    Columns match as categories (variable point vs variable point, mid MP
    vs mid MP).  Additionally, a variable merge-in point on one side
    matches a lane-1-origin vehicle on the other: the lane-1 vehicle will
    physically cross that point.  Acquired first-MP labels on lane-1
    arrivals do not participate; matching uses the intrinsic columns only.
    """
    mine = _intrinsic_mp1(me)
    theirs = _intrinsic_mp1(row)
    if mine is not None and mine == theirs:
        return True
    if theirs == MP_VAR and me.original_lane == L1:
        return True
    if mine == MP_VAR and row.original_lane == L1:
        return True
    return False


def _intrinsic_mp1(rec: CavRecord) -> str | None:
    """First-MP column value as assigned on arrival (acquired labels on
    lane-1 rows are bookkeeping, not matchable columns)."""
    return rec.mp_first if rec.original_lane != L1 else None


def _triple_matches(me: CavRecord, row: CavRecord) -> bool:
    return (me.original_lane == row.original_lane
            and _intrinsic_mp1(me) == _intrinsic_mp1(row)
            and me.mp_second == row.mp_second)


def resolve_ip(tables: QueueTables, me: CavRecord,
               exclude: frozenset = frozenset()) -> CavRecord | None:
    """Physically nearest same-lane row above ``me`` in its queue.

    Rows are held in arrival order, which tracks position order between
    reorder events; where they diverge (a vehicle progressed past an
    earlier arrival on a different stretch of the network), rows that sit
    physically behind ``me`` are not predecessors and are skipped.

    ``exclude`` lists vehicles covered by a still-active gap row: the
    interpolated gap constraint governs the approach to the shared merge
    point and hands over to the rear-end constraint, already satisfied,
    exactly when the subject crosses it.
    """
    queue = tables.home_queue(me)
    l_extra = tables.params.l_extra
    best = None
    best_gap = None
    for row in tables.rows_above(me, queue):
        if row.current_lane != me.current_lane or row.uid in exclude:
            continue
        gap = transform_position(me.original_lane, row.original_lane,
                                 row.x, l_extra) - me.x
        if gap <= 0.0:
            continue
        if best_gap is None or gap < best_gap:
            best, best_gap = row, gap
    return best


def _acquired_station(me: CavRecord, row: CavRecord, l_extra: float) -> float:
    """Station, in me's coordinate, of the row's variable merge-in point."""
    return transform_position(me.original_lane, row.original_lane,
                              row.mp_first_station, l_extra)


def match_constraints(tables: QueueTables, me: CavRecord) -> ConstraintAssignment:
    """Scan the arrival's queue bottom-up and resolve {ip, j, k}.

    Per row the cases are checked in order: (1) all of original lane and
    both MP columns equal -- pure car-following, the row is ``ip``;
    (2) first-MP columns match and the row shares the exit lane -- gap
    partner ``j`` at the first MP, nothing at the second; (3) first-MP
    columns match across exit lanes -- ``j`` at the first MP plus ``k``
    from a continued scan of the second-MP column; (4) second-MP columns
    match first -- ``j`` at the second MP plus ``k`` from a continued scan
    of the first-MP column.  The scan stops at the first satisfying row.
    """
    asg = ConstraintAssignment()
    queue = tables.home_queue(me)
    rows = tables.rows_above(me, queue)
    l_extra = tables.params.l_extra

    matched_row = None
    for row in rows:
        if _triple_matches(me, row):
            asg.matched_case = CASE1
            asg.ip = row
            asg.anchor = row
            return asg
        if _mp1_matches(me, row):
            matched_row = row
            if row.type == me.type:
                asg.matched_case = CASE2
            else:
                asg.matched_case = CASE3
            asg.j = row
            asg.mp_for_j = _first_mp_of(me, row, l_extra)
            break
        if me.mp_second == row.mp_second:
            matched_row = row
            asg.matched_case = CASE4
            asg.j = row
            # j holds the gap constraint at the subject's first MP; a
            # vehicle with a single MP pins it at that one instead
            if me.mp_first is not None and me.original_lane != L1:
                asg.mp_for_j = (me.mp_first, me.mp_first_station)
            else:
                asg.mp_for_j = (me.mp_second, me.mp_second_station)
            break

    if asg.matched_case == CASE3:
        for row in rows:
            if row is matched_row:
                continue
            if me.mp_second == row.mp_second:
                asg.k = row
                asg.mp_for_k = (me.mp_second, me.mp_second_station)
                break
    elif asg.matched_case == CASE4:
        for row in rows:
            if row is matched_row:
                continue
            if _mp1_matches(me, row):
                asg.k = row
                asg.mp_for_k = (me.mp_second, me.mp_second_station)
                break

    asg.ip = resolve_ip(tables, me)
    if asg.k is not None and asg.ip is not None and asg.k.uid == asg.ip.uid:
        asg.redundant_k = True
    return asg


def _first_mp_of(me: CavRecord, row: CavRecord, l_extra: float) -> tuple[str, float]:
    """MP kind and own-coordinate station of the first-MP gap constraint."""
    if me.mp_first is not None and me.original_lane != L1:
        return (me.mp_first, me.mp_first_station)
    # lane-1 arrival matched against a merging row: the conflict point is
    # the row's variable merge-in station, expressed in me's coordinate
    return (MP_VAR, _acquired_station(me, row, l_extra))


def case_count(n_mps: int) -> int:
    """Number of matcher cases for a scenario with ``n_mps`` merge points.

    Counts one car-following case plus the gap-partner combinations given
    by the recursion S_n = 1 + 2*S_{n-1} + S_{n-2} + ... + S_1, S_1 = 1.
    """
    if n_mps < 1:
        raise ValueError("n_mps must be >= 1")
    s = [0, 1]  # s[1] = 1
    for n in range(2, n_mps + 1):
        s.append(1 + 2 * s[n - 1] + sum(s[1:n - 1]))
    return s[n_mps] + 1
