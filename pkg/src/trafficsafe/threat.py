"""Threat levels for a (user, sensor) pair.

Precedence is Alarm > Warning1 > Warning2 > None:

* Alarm: forward rays cross inside the user's cell, sensor in the same cell.
* Warning1: rays cross inside the user's cell, sensor in one of the 8 neighbors.
* Warning2: sensor in the user's cell with an active event, no qualifying crossing.

The sensor ray only exists while the sensor reports an emergency vehicle
heading toward it, so Alarm and Warning1 also need the event flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import grid
from .geo import IntersectionSolution, NoIntersection, Trajectory, intersect
from .grid import Cell, cell_of


class ThreatConfigError(ValueError):
    pass


class ThreatLevel(str, Enum):
    ALARM = "alarm"
    WARNING1 = "warning1"
    WARNING2 = "warning2"
    NONE = "none"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {ThreatLevel.NONE: 0, ThreatLevel.WARNING2: 1, ThreatLevel.WARNING1: 2, ThreatLevel.ALARM: 3}


class Applicability(str, Enum):
    PROXIMITY = "proximity"
    INTERSECTION = "intersection"
    NOT_APPLICABLE = "not_applicable"


def _check_cell(tr: Trajectory, cell: Cell, who: str) -> None:
    expected = cell_of(tr.origin, cell.size)
    if expected != cell:
        raise ThreatConfigError(f"{who} cell {cell} does not match position cell {expected}")


@dataclass(frozen=True)
class UserState:
    id: str
    trajectory: Trajectory
    cell: Cell

    def __post_init__(self):
        _check_cell(self.trajectory, self.cell, f"user {self.id}")

    @classmethod
    def at(cls, id: str, trajectory: Trajectory, d: float = grid.DEFAULT_CELL_SIZE) -> UserState:
        return cls(id, trajectory, cell_of(trajectory.origin, d))


@dataclass(frozen=True)
class SensorState:
    id: str
    trajectory: Trajectory
    cell: Cell
    event_active: bool = False

    def __post_init__(self):
        _check_cell(self.trajectory, self.cell, f"sensor {self.id}")

    @classmethod
    def at(cls, id: str, trajectory: Trajectory, event_active: bool = False,
           d: float = grid.DEFAULT_CELL_SIZE) -> SensorState:
        return cls(id, trajectory, cell_of(trajectory.origin, d), event_active)


@dataclass(frozen=True)
class ThreatVerdict:
    level: ThreatLevel
    intersection: Optional[IntersectionSolution] = None
    rationale: str = field(default="", compare=False)

    def to_dict(self) -> dict:
        d = {"level": self.level.value, "rationale": self.rationale}
        if self.intersection is not None:
            i = self.intersection
            d["intersection"] = {
                "x": i.point.x, "y": i.point.y, "t_u": i.t_u, "t_s": i.t_s,
                "eta_u": i.eta_u, "eta_s": i.eta_s,
            }
        return d


def classify(u: UserState, s: SensorState) -> ThreatVerdict:
    cu, cs = u.cell, s.cell
    if cu.size != cs.size:
        raise ThreatConfigError(f"grid mismatch: user cell size {cu.size}, sensor cell size {cs.size}")

    sol = intersect(u.trajectory, s.trajectory)
    if isinstance(sol, IntersectionSolution):
        inside = grid.intra(sol.point, cu)
    else:
        inside = False

    if s.event_active and inside:
        if cu == cs:
            return ThreatVerdict(ThreatLevel.ALARM, sol,
                                 f"rays cross in {cu} and sensor shares the cell")
        if grid.is_neighbor(cu, cs):
            return ThreatVerdict(ThreatLevel.WARNING1, sol,
                                 f"rays cross in {cu}, sensor in neighbor {cs}")
    if s.event_active and cu == cs:
        why = sol.reason.value if isinstance(sol, NoIntersection) else "crossing outside cell"
        return ThreatVerdict(ThreatLevel.WARNING2, sol if isinstance(sol, IntersectionSolution) else None,
                             f"sensor event in shared cell {cu} ({why})")
    if not s.event_active:
        return ThreatVerdict(ThreatLevel.NONE, None, "no active sensor event")
    return ThreatVerdict(ThreatLevel.NONE, None, f"sensor {cs} not relevant to user cell {cu}")


def applicability(u: UserState, s: SensorState) -> Applicability:
    sol = intersect(u.trajectory, s.trajectory)
    if isinstance(sol, IntersectionSolution):
        cu = u.cell
        hit = grid.intra(sol.point, cu) or any(c.contains(sol.point) for c in grid.neighborhood(cu))
        if hit:
            return Applicability.INTERSECTION
    if s.event_active and grid.coexist(s.trajectory.origin, u.cell):
        return Applicability.PROXIMITY
    return Applicability.NOT_APPLICABLE
