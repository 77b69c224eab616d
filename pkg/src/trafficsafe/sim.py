"""Seeded pipeline simulation on a virtual millisecond clock.

Each camera frame with an emergency vehicle heading toward the camera becomes
an event. The event samples the sensor, uplink and processing stages once and
is then delivered to every user in the sensor's 3x3 zone, which samples its
own downlink, validation and action stages. The user classifies the event
against where it is when the notification arrives.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .budget import impact_velocity
from .direction import Heading, classify_box, object_bearing
from .geo import IntersectionSolution, Trajectory, intersect, position_at
from .grid import in_zone
from .scenario import DELIVERY_STAGES, EVENT_STAGES, STAGES, Scenario, ScenarioError, render_frame
from .threat import SensorState, ThreatLevel, UserState, classify

CSV_COLUMNS = (
    "run", "event_id", "user", *STAGES, "total", "verdict", "met_deadline", "impact_mps",
)

HIST_BIN_MS = 2.5


@dataclass
class RunRecord:
    run: int
    event_id: str
    user: str
    sensor: str
    frame_time_ms: float
    stages: dict[str, float]
    total: float
    verdict: ThreatLevel
    distance_m: Optional[float]
    met_deadline: bool
    impact_mps: Optional[float]

    def row(self) -> list[str]:
        return [
            str(self.run), self.event_id, self.user,
            *(repr(self.stages[s]) for s in STAGES),
            repr(self.total), self.verdict.value, str(self.met_deadline).lower(),
            "" if self.impact_mps is None else repr(self.impact_mps),
        ]


@dataclass
class StageStats:
    mean: float
    median: float
    std: float
    n: int
    clipped: int = 0

    def to_dict(self) -> dict:
        return {"mean": self.mean, "median": self.median, "std": self.std, "n": self.n,
                "clipped": self.clipped}


@dataclass
class Summary:
    n_records: int
    stages: dict[str, StageStats]
    total: StageStats
    verdicts: dict[str, int]
    deadline_met: int
    histograms: dict[str, list[tuple[float, int]]]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "stages": {k: v.to_dict() for k, v in self.stages.items()},
            "total": self.total.to_dict(),
            "verdicts": self.verdicts,
            "deadline_met": self.deadline_met,
            "histograms": {k: [[lo, c] for lo, c in v] for k, v in self.histograms.items()},
            "notes": self.notes,
        }


def _stats(xs: Sequence[float], clipped: int = 0) -> StageStats:
    std = statistics.stdev(xs) if len(xs) > 1 else 0.0
    return StageStats(statistics.fmean(xs), statistics.median(xs), std, len(xs), clipped)


def histogram(xs: Iterable[float], width: float = HIST_BIN_MS) -> list[tuple[float, int]]:
    """Counts per bin ``[k*width, (k+1)*width)``, empty bins between occupied ones included."""
    idx = [math.floor(x / width) for x in xs]
    if not idx:
        return []
    counts: dict[int, int] = {}
    for k in idx:
        counts[k] = counts.get(k, 0) + 1
    return [(k * width, counts.get(k, 0)) for k in range(min(idx), max(idx) + 1)]


def mode_bin(hist: list[tuple[float, int]]) -> float:
    return max(hist, key=lambda b: b[1])[0]


def summarize(records: Sequence[RunRecord], clipped: Optional[dict[str, int]] = None) -> Summary:
    if not records:
        raise ValueError("no records to summarize")
    clipped = clipped or {}
    stages = {s: _stats([r.stages[s] for r in records], clipped.get(s, 0)) for s in STAGES}
    verdicts: dict[str, int] = {}
    for r in records:
        verdicts[r.verdict.value] = verdicts.get(r.verdict.value, 0) + 1
    notes = []
    n = len(records)
    for s, c in clipped.items():
        if c > 0.001 * n:
            notes.append(f"{s}: {c} of {n} draws clipped at 0 ms")
    return Summary(
        n_records=n,
        stages=stages,
        total=_stats([r.total for r in records]),
        verdicts=verdicts,
        deadline_met=sum(r.met_deadline for r in records),
        histograms={
            "total": histogram(r.total for r in records),
            "t_p_ai": histogram(r.stages["t_p_ai"] for r in records),
        },
        notes=notes,
    )


def to_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def export_csv(records: Sequence[RunRecord], path: str | Path) -> None:
    if not records:
        raise ValueError("no records to export")
    Path(path).write_text(to_csv(records))


@dataclass
class SimResult:
    records: list[RunRecord]
    summary: Summary

    def csv(self) -> str:
        return to_csv(self.records)


def run(sc: Scenario, seed: Optional[int] = None, runs: Optional[int] = None) -> SimResult:
    sc.validate()
    rng = np.random.default_rng(sc.seed if seed is None else seed)
    n_runs = sc.runs if runs is None else runs
    if n_runs < 1:
        raise ScenarioError("runs must be >= 1")
    n_frames = max(1, math.ceil(sc.duration_s * 1000.0 / sc.frame_interval_ms - 1e-9))
    clipped = {s: 0 for s in STAGES}
    records: list[RunRecord] = []

    def draw(stage: str) -> float:
        v, c = sc.latency[stage].sample(rng)
        clipped[stage] += c
        return v

    for r in range(n_runs):
        for k in range(n_frames):
            t_frame = k * sc.frame_interval_ms
            for sensor in sc.sensors:
                frame = render_frame(sc, sensor, t_frame / 1000.0, k, t_frame)
                sensor_cell = sc.cell(sensor.position)
                for b_idx, box in enumerate(frame.boxes):
                    if box.class_label not in sc.emergency_classes:
                        continue
                    heading = classify_box(box, frame.height, sensor.lane_zones, sensor.beta)
                    if heading is not Heading.TOWARD:
                        continue
                    event_id = f"r{r:04d}-f{k:04d}-{sensor.id}-{b_idx}"
                    ev_stages = {s: draw(s) for s in EVENT_STAGES}
                    s_traj = Trajectory(sensor.position, object_bearing(sensor.camera_bearing, heading))
                    s_state = SensorState(sensor.id, s_traj, sensor_cell, event_active=True)
                    for user in sc.users:
                        rec = _deliver(sc, r, event_id, t_frame, ev_stages, draw, user, s_state)
                        if rec is not None:
                            records.append(rec)
    if not records:
        raise ScenarioError("scenario produced no deliveries; is an emergency vehicle in view?")
    return SimResult(records, summarize(records, clipped))


def _deliver(sc, r, event_id, t_frame, ev_stages, draw, user, s_state) -> Optional[RunRecord]:
    u_tr = user.trajectory
    # dissemination uses the zone the user last registered, i.e. its cell at frame time
    u_cell_frame = sc.cell(position_at(u_tr, t_frame / 1000.0))
    if not in_zone(s_state.cell, u_cell_frame):
        return None
    stages = dict(ev_stages)
    for s in DELIVERY_STAGES:
        stages[s] = draw(s)
    total = sum(stages[s] for s in STAGES)
    t_arrive = t_frame + stages["t_s"] + stages["t_eval"] + stages["t_p_dec"] \
        + stages["t_p_ai"] + stages["t_p_tc"] + stages["t_exe"]
    here = position_at(u_tr, t_arrive / 1000.0)
    u_state = UserState(user.id, Trajectory(here, u_tr.bearing, u_tr.speed), sc.cell(here))
    verdict = classify(u_state, s_state)

    distance = None
    sol0 = intersect(u_tr, s_state.trajectory)
    if isinstance(sol0, IntersectionSolution):
        distance = sol0.t_u - u_tr.speed * (t_frame + total) / 1000.0

    met = total <= sc.t_max_ms
    impact = None
    if not met and verdict.level is ThreatLevel.ALARM:
        impact = impact_velocity(total, sc.k_impact)[0]
    return RunRecord(r, event_id, user.id, s_state.id, t_frame, stages, total,
                     verdict.level, distance, met, impact)
