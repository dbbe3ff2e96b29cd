"""Dual FIFO queue tables with merging-point metadata.

The coordinator keeps two ordered tables, one per control-zone exit lane.
Table rows carry (index, current lane, original lane, first MP, second MP)
plus the vehicle's dynamic state.  A vehicle entering on l2 or l3 is listed
in *both* tables (one shared record object, so state can never diverge)
until it passes its first merge point, after which it is dropped from the
table of the exit lane it did not choose.

Index scheme: exit-lane-2 vehicles draw indices from ``{0..n-1}``, exit-
lane-1 vehicles from ``{n..2n-1}``.  Index 0 (resp. ``n``) denotes the most
recent vehicle to have left the control zone via that exit; its row is kept
so followers can still resolve a predecessor against it, and it is purged
when the next exit renumbers it off the low end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .scenario import ScenarioParams

L1, L2_LANE, L3_LANE, L4_LANE = "l1", "l2", "l3", "l4"
MP_VAR, MP2, MP3, MP4 = "M1", "M2", "M3", "M4"

EXIT_L1 = "l1"
EXIT_L2 = "l2"


class QueueError(RuntimeError):
    """Raised on structural queue misuse (overflow, missing record)."""


@dataclass
class CavRecord:
    """One vehicle: identity, lane history, merge points, timing, state."""

    uid: int
    index: int
    original_lane: str
    current_lane: str
    exit_lane: str
    t_arrive: float
    v_arrive: float
    mp_first: str | None = None         # M1 (variable), M2, or None
    mp_first_station: float | None = None
    mp_second: str = MP3
    mp_second_station: float = 0.0
    L_i1: float | None = None           # variable merge station, l2 -> l1 only
    x: float = 0.0
    v: float = 0.0
    x_prev: float = 0.0                 # state at the last step boundary
    v_prev: float = 0.0
    t_exit: float | None = None
    t_mp: dict = field(default_factory=dict)  # mp kind -> crossing time
    # runtime fields used by the simulation engine
    sol: object = None
    assignment: object = None
    u: float = 0.0
    energy: float = 0.0
    exited: bool = False
    passed_first_mp: bool = False

    @property
    def type(self) -> int:
        """1 for exit-lane-1 indices (>= n is resolved by the tables)."""
        return self._type

    _type: int = 2

    def __repr__(self):  # compact: full dataclass repr is unwieldy in logs
        return (f"CavRecord(idx={self.index}, orig={self.original_lane}, "
                f"cur={self.current_lane}, x={self.x:.2f})")


def transform_position(viewer_orig: str, other_orig: str, x_other: float,
                       l_extra: float) -> float:
    """Express another vehicle's position in the viewer's lane coordinate.

    A lane change costs ``l_extra`` of extra path, so positions of vehicles
    that entered on l1 read ``l_extra`` short of the equivalent l2/l3-path
    station, and vice versa.  Applies only to l1-origin vs l2/l3-origin
    pairs; all other pairs share a common scale already.
    """
    viewer_l1 = viewer_orig == L1
    other_l1 = other_orig == L1
    if not viewer_l1 and other_l1:
        return x_other + l_extra
    if viewer_l1 and not other_l1:
        return x_other - l_extra
    return x_other


class QueueTables:
    """The two extended FIFO queues plus the shared record registry."""

    def __init__(self, params: ScenarioParams):
        self.params = params
        self.n = params.capacity_n
        self.s1: list[CavRecord] = []
        self.s2: list[CavRecord] = []
        self._uid = 0
        self.version = 0          # bumped on any event that can move i_p
        self.removed_count = 0

    # -- cardinalities -----------------------------------------------------
    @property
    def n1(self) -> int:
        return sum(1 for r in self.s1 if r.type == 1)

    @property
    def n2(self) -> int:
        return sum(1 for r in self.s2 if r.type == 2)

    def records(self) -> list[CavRecord]:
        """All live records, dual-listed ones once."""
        seen = {}
        for r in self.s1 + self.s2:
            seen.setdefault(r.uid, r)
        return list(seen.values())

    def home_queue(self, record: CavRecord) -> list[CavRecord]:
        """The table of the record's exit lane (its lookup queue)."""
        return self.s1 if record.type == 1 else self.s2

    def rows_above(self, record: CavRecord, queue: list[CavRecord]):
        """Rows scanned bottom-up starting just above the record's row."""
        pos = queue.index(record)
        return queue[pos - 1::-1] if pos > 0 else []

    def progress(self, record: CavRecord) -> float:
        """Position on the common scale of the record's exit path."""
        return transform_position(
            L2_LANE, record.original_lane, record.x, self.params.l_extra)

    # -- arrival -----------------------------------------------------------
    def assign_arrival(self, lane: str, t: float, v0: float,
                       merge_decision: str | None = None,
                       l_i1: float | None = None) -> CavRecord:
        """Create, index and insert the record for a new arrival.

        ``merge_decision`` is the exit lane chosen for l2/l3 arrivals and is
        ignored for l1/l4.  ``l_i1`` is the variable merge station, required
        for an l2 arrival that switches to l1.
        """
        p = self.params
        if lane == L1:
            exit_lane = EXIT_L1
        elif lane == L4_LANE:
            exit_lane = EXIT_L2
        elif lane in (L2_LANE, L3_LANE):
            if merge_decision not in (EXIT_L1, EXIT_L2):
                raise QueueError(f"{lane} arrival needs an exit decision")
            exit_lane = merge_decision
        else:
            raise QueueError(f"unknown lane {lane!r}")

        to_l1 = exit_lane == EXIT_L1
        if to_l1:
            if self.n1 >= self.n:
                raise QueueError("queue s1 full")
            index, vtype = self.n + self.n1, 1
        else:
            if self.n2 >= self.n:
                raise QueueError("queue s2 full")
            index, vtype = self.n2, 2

        # merge-point columns; stations are in the vehicle's own coordinate
        mp1 = mp1_sta = None
        if lane == L2_LANE and to_l1:
            if l_i1 is None:
                raise QueueError("l2 arrival switching to l1 needs L_i1")
            mp1, mp1_sta = MP_VAR, l_i1
        elif lane in (L2_LANE, L3_LANE) and not (lane == L2_LANE and to_l1):
            mp1, mp1_sta = MP2, p.L2
        if to_l1:
            mp2 = MP4
            mp2_sta = p.L4 if lane == L1 else p.L4 + p.l_extra
        else:
            mp2, mp2_sta = MP3, p.L3

        rec = CavRecord(
            uid=self._uid, index=index, original_lane=lane, current_lane=lane,
            exit_lane=exit_lane, t_arrive=t, v_arrive=v0, v=v0,
            mp_first=mp1, mp_first_station=mp1_sta,
            mp_second=mp2, mp_second_station=mp2_sta,
            L_i1=l_i1 if (lane == L2_LANE and to_l1) else None,
        )
        rec._type = vtype
        self._uid += 1

        if lane == L1:
            self.s1.append(rec)
        elif lane == L4_LANE:
            self.s2.append(rec)
        else:
            self.s1.append(rec)
            self.s2.append(rec)
        return rec

    # -- events ------------------------------------------------------------
    def on_exit(self, record: CavRecord, t: float | None = None) -> None:
        """Renumber after ``record`` leaves via its exit merge point.

        Every index of the exiting record's type decrements by one; the
        record whose index falls below the type's range is purged.
        """
        if record not in self.s1 and record not in self.s2:
            raise QueueError(f"record uid={record.uid} not queued")
        record.exited = True
        if t is not None and record.t_exit is None:
            record.t_exit = t
        # a dual-listed exiter (never passed its first MP within a step of
        # the exit; geometrically rare) leaves the non-home queue first
        other = self.s2 if record.type == 1 else self.s1
        if record in other:
            other.remove(record)
        vtype = record.type
        floor = self.n if vtype == 1 else 0
        purge = []
        for r in self.records():
            if r.type == vtype:
                r.index -= 1
                if r.index < floor and r.exited:
                    purge.append(r)
        for r in purge:
            self._remove_everywhere(r)
        self.version += 1

    def on_first_mp_pass(self, record: CavRecord) -> None:
        """Drop an l2/l3 arrival from the queue it did not choose.

        Also updates the current lane when the pass is a physical lane
        change (l2 to l1 at the variable point; l3's entry at the mid MP).
        """
        if record.original_lane not in (L2_LANE, L3_LANE):
            return
        if record.passed_first_mp:
            return
        record.passed_first_mp = True
        if record.type == 1:
            if record in self.s2:
                self.s2.remove(record)
            record.current_lane = L1
        else:
            if record in self.s1:
                self.s1.remove(record)
            if record.original_lane == L3_LANE:
                record.current_lane = L2_LANE
        self.version += 1

    def on_overtake(self, record: CavRecord) -> None:
        """Re-order the exiting record's queue by physical progress.

        Called after ``record`` passed its exit merge point while rows
        above it are still on their way: those rows were physically
        overtaken, so the rows swap (with their metadata) to keep
        predecessor lookups correct.  No-op when the row above already
        exited.
        """
        queue = self.home_queue(record)
        if record not in queue:
            return
        moved = True
        while moved:
            moved = False
            pos = queue.index(record)
            if pos > 0:
                above = queue[pos - 1]
                if not above.exited and self.progress(above) < self.progress(record):
                    queue[pos - 1], queue[pos] = queue[pos], queue[pos - 1]
                    moved = True
        self.version += 1

    def _remove_everywhere(self, record: CavRecord) -> None:
        if record in self.s1:
            self.s1.remove(record)
        if record in self.s2:
            self.s2.remove(record)
        self.removed_count += 1

    # -- debugging / golden-test dump ---------------------------------------
    def dump(self) -> str:
        """Tabular text dump of both queues (columns as in the row schema)."""
        lines = []
        for name, queue in (("S1", self.s1), ("S2", self.s2)):
            lines.append(f"== {name} ==")
            lines.append("index\tcurrent\toriginal\tmp1\tmp2")
            for r in queue:
                mp1 = r.mp_first or "-"
                lines.append(
                    f"{r.index}\t{r.current_lane}\t{r.original_lane}\t{mp1}\t{r.mp_second}")
        return "\n".join(lines) + "\n"
