"""Scenario files, stage latency distributions and synthetic camera frames.

A scenario is a YAML document. Positions are given either as ``{x, y}`` meters
in the grid frame or as ``{lat, lon}``, projected around ``grid.origin``.
``default_scenario()`` is the reference layout: a camera at an intersection
in cell B3 looking west at an approaching emergency vehicle, V2 driving north
into the crossing street, V1 driving east ahead of the emergency vehicle.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import budget
from .direction import DEFAULT_BETA, BoundingBox, DetectionFrame, LaneZone
from .geo import CartPoint, GeoDomainError, GeoPoint, Trajectory, position_at, to_cartesian
from .grid import DEFAULT_CELL_SIZE, Cell, OutOfGridError, cell_of

STAGES = ("t_s", "t_eval", "t_p_dec", "t_p_ai", "t_p_tc", "t_exe", "t_c", "t_act")
EVENT_STAGES = ("t_s", "t_eval", "t_p_dec", "t_p_ai", "t_p_tc")
DELIVERY_STAGES = ("t_exe", "t_c", "t_act")

REFERENCE_AI_PROFILE = "builtin:t_ai_reference"


class ScenarioError(ValueError):
    pass


def load_samples(source: str) -> np.ndarray:
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        text = resources.files("trafficsafe.data").joinpath(f"{name}.txt").read_text()
    else:
        text = Path(source).read_text()
    vals = [float(ln) for ln in (s.strip() for s in text.splitlines()) if ln and not ln.startswith("#")]
    if not vals:
        raise ScenarioError(f"no samples in {source}")
    arr = np.asarray(vals)
    if (arr < 0).any() or not np.isfinite(arr).all():
        raise ScenarioError(f"samples in {source} must be finite and >= 0")
    return arr


@dataclass
class LatencySpec:
    kind: str = "constant"
    value: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    mean: float = 0.0
    std: float = 0.0
    source: str = ""
    _samples: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "constant":
            if not self.value >= 0:
                raise ScenarioError(f"constant latency must be >= 0, got {self.value}")
        elif self.kind == "uniform":
            if not 0 <= self.lo <= self.hi:
                raise ScenarioError(f"uniform needs 0 <= lo <= hi, got [{self.lo}, {self.hi}]")
        elif self.kind == "normal":
            if self.std < 0:
                raise ScenarioError(f"normal std must be >= 0, got {self.std}")
        elif self.kind == "empirical":
            if not self.source:
                raise ScenarioError("empirical latency needs a sample source")
            self._samples = load_samples(self.source)
        else:
            raise ScenarioError(f"unknown latency kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> LatencySpec:
        return cls("constant", value=value)

    def sample(self, rng: np.random.Generator) -> tuple[float, bool]:
        """One draw in ms and whether it was clipped at zero."""
        k = self.kind
        if k == "constant":
            return float(self.value), False
        if k == "uniform":
            return float(rng.uniform(self.lo, self.hi)), False
        if k == "normal":
            x = float(rng.normal(self.mean, self.std))
            return (0.0, True) if x < 0 else (x, False)
        return float(rng.choice(self._samples)), False

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        if self.kind == "normal":
            return {"kind": "normal", "mean": self.mean, "std": self.std}
        return {"kind": "empirical", "source": self.source}

    @classmethod
    def from_dict(cls, d: Any) -> LatencySpec:
        if isinstance(d, (int, float)):
            return cls.constant(float(d))
        if not isinstance(d, dict) or "kind" not in d:
            raise ScenarioError(f"bad latency spec {d!r}")
        allowed = {"kind", "value", "lo", "hi", "mean", "std", "source"}
        extra = set(d) - allowed
        if extra:
            raise ScenarioError(f"unknown latency keys {sorted(extra)}")
        return cls(**d)


def nominal_latencies() -> dict[str, LatencySpec]:
    """Zero-variance stage latencies at the nominal component values."""
    c = LatencySpec.constant
    return {
        "t_s": c(budget.T_CMOS_MS + budget.T_ENC_MS),
        "t_eval": c(25.20),
        "t_p_dec": c(budget.T_DEC_MS),
        "t_p_ai": c(budget.T_AI_MEDIAN_MS),
        "t_p_tc": c(budget.T_TC_MEDIAN_MS),
        "t_exe": c(25.20),
        "t_c": c(budget.T_C_MS),
        "t_act": c(budget.T_ACT_MS),
    }


def measured_latencies() -> dict[str, LatencySpec]:
    """Replay of the measured AI and threat-classification timing distributions."""
    lat = nominal_latencies()
    lat["t_p_ai"] = LatencySpec("empirical", source=REFERENCE_AI_PROFILE)
    lat["t_p_tc"] = LatencySpec("normal", mean=budget.T_TC_MEAN_MS, std=budget.T_TC_STD_MS)
    return lat


PROFILES = {"nominal": nominal_latencies, "measured": measured_latencies}


@dataclass(frozen=True)
class SensorConfig:
    id: str
    position: CartPoint
    camera_bearing: float
    fov_deg: float = 90.0
    socket_in: str = "127.0.0.1:0"
    lane_zones: tuple[LaneZone, ...] = ()
    beta: float = DEFAULT_BETA


@dataclass(frozen=True)
class MovingObject:
    id: str
    trajectory: Trajectory
    object_class: str = "car"


@dataclass
class Scenario:
    origin: GeoPoint
    cell_size: float
    sensors: list[SensorConfig]
    users: list[MovingObject]
    emergency_vehicles: list[MovingObject]
    latency: dict[str, LatencySpec]
    seed: int = 0
    runs: int = 1
    duration_s: float = 2.0
    frame_interval_ms: float = 200.0
    t_max_ms: float = budget.T_MAX_MS
    k_impact: float = budget.K_IMPACT
    detection_range_m: float = 400.0
    frame_width: int = 1920
    frame_height: int = 1080
    emergency_classes: tuple[str, ...] = ("emergency",)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.sensors:
            raise ScenarioError("scenario has no sensors")
        if not self.users:
            raise ScenarioError("scenario has no users")
        if not self.frame_interval_ms > 0:
            raise ScenarioError("frame_interval_ms must be > 0")
        if not self.duration_s > 0:
            raise ScenarioError("duration_s must be > 0")
        if self.runs < 1:
            raise ScenarioError("runs must be >= 1")
        if not self.cell_size > 0:
            raise ScenarioError("cell size must be > 0")
        missing = set(STAGES) - set(self.latency)
        if missing:
            raise ScenarioError(f"latency model missing stages {sorted(missing)}")
        ids = [s.id for s in self.sensors] + [u.id for u in self.users]
        if len(set(ids)) != len(ids):
            raise ScenarioError("sensor and user ids must be unique")
        try:
            for s in self.sensors:
                cell_of(s.position, self.cell_size)
            for u in self.users:
                cell_of(u.trajectory.origin, self.cell_size)
        except OutOfGridError as exc:
            raise ScenarioError(str(exc)) from None

    def cell(self, p: CartPoint) -> Cell:
        return cell_of(p, self.cell_size)

    def sensor(self, sid: str) -> SensorConfig:
        for s in self.sensors:
            if s.id == sid:
                return s
        raise ScenarioError(f"no sensor {sid!r} in scenario")

    def user(self, uid: str) -> MovingObject:
        for u in self.users:
            if u.id == uid:
                return u
        raise ScenarioError(f"no user {uid!r} in scenario")

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        def pos(p: CartPoint) -> dict:
            return {"x": p.x, "y": p.y}

        def mover(m: MovingObject) -> dict:
            return {"id": m.id, "class": m.object_class, "position": pos(m.trajectory.origin),
                    "bearing": m.trajectory.bearing, "speed": m.trajectory.speed}

        return {
            "seed": self.seed,
            "runs": self.runs,
            "duration_s": self.duration_s,
            "frame_interval_ms": self.frame_interval_ms,
            "t_max_ms": self.t_max_ms,
            "k_impact": self.k_impact,
            "detection_range_m": self.detection_range_m,
            "emergency_classes": list(self.emergency_classes),
            "frame": {"width": self.frame_width, "height": self.frame_height},
            "grid": {"origin": {"lat": self.origin.lat, "lon": self.origin.lon},
                     "cell_size_m": self.cell_size},
            "sensors": [
                {"id": s.id, "position": pos(s.position), "camera_bearing": s.camera_bearing,
                 "fov_deg": s.fov_deg, "socket_in": s.socket_in, "beta": s.beta,
                 "lane_zones": [z.to_dict() for z in s.lane_zones]}
                for s in self.sensors
            ],
            "users": [mover(u) for u in self.users],
            "emergency_vehicles": [mover(e) for e in self.emergency_vehicles],
            "latency": {k: self.latency[k].to_dict() for k in STAGES},
        }

    @classmethod
    def from_dict(cls, d: dict) -> Scenario:
        try:
            return _scenario_from_dict(d)
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError, GeoDomainError) as exc:
            raise ScenarioError(f"invalid scenario: {exc!r}") from None

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a mapping")
    g = d.get("grid", {})
    o = g.get("origin", {"lat": 0.0, "lon": 0.0})
    origin = GeoPoint(float(o["lat"]), float(o["lon"]))
    cell_size = float(g.get("cell_size_m", DEFAULT_CELL_SIZE))

    def pos(p: dict) -> CartPoint:
        if "x" in p and "y" in p:
            return CartPoint(float(p["x"]), float(p["y"]))
        if "lat" in p and "lon" in p:
            return to_cartesian(GeoPoint(float(p["lat"]), float(p["lon"])), origin)
        raise ScenarioError(f"position needs x/y or lat/lon, got {p!r}")

    def mover(m: dict, default_class: str) -> MovingObject:
        tr = Trajectory(pos(m["position"]), float(m.get("bearing", 0.0)), float(m.get("speed", 0.0)))
        return MovingObject(str(m["id"]), tr, str(m.get("class", default_class)))

    sensors = [
        SensorConfig(
            id=str(s["id"]),
            position=pos(s["position"]),
            camera_bearing=float(s["camera_bearing"]) % 360.0,
            fov_deg=float(s.get("fov_deg", 90.0)),
            socket_in=str(s.get("socket_in", "127.0.0.1:0")),
            lane_zones=tuple(LaneZone.from_dict(z) for z in s.get("lane_zones") or ()),
            beta=float(s.get("beta", DEFAULT_BETA)),
        )
        for s in d.get("sensors") or ()
    ]
    frame = d.get("frame", {})
    width = int(frame.get("width", 1920))
    height = int(frame.get("height", 1080))
    sensors = [s if s.lane_zones else _with_default_lanes(s, width, height) for s in sensors]

    latency = nominal_latencies()
    lat = d.get("latency") or {}
    unknown = set(lat) - set(STAGES)
    if unknown:
        raise ScenarioError(f"unknown latency stages {sorted(unknown)}")
    for k, v in lat.items():
        latency[k] = LatencySpec.from_dict(v)

    return Scenario(
        origin=origin,
        cell_size=cell_size,
        sensors=sensors,
        users=[mover(u, "car") for u in d.get("users") or ()],
        emergency_vehicles=[mover(e, "emergency") for e in d.get("emergency_vehicles") or ()],
        latency=latency,
        seed=int(d.get("seed", 0)),
        runs=int(d.get("runs", 1)),
        duration_s=float(d.get("duration_s", 2.0)),
        frame_interval_ms=float(d.get("frame_interval_ms", 200.0)),
        t_max_ms=float(d.get("t_max_ms", budget.T_MAX_MS)),
        k_impact=float(d.get("k_impact", budget.K_IMPACT)),
        detection_range_m=float(d.get("detection_range_m", 400.0)),
        frame_width=width,
        frame_height=height,
        emergency_classes=tuple(d.get("emergency_classes", ("emergency",))),
    )


def default_lane_zones(width: int, height: int) -> tuple[LaneZone, ...]:
    """Oncoming lane on the left half of the road area, outgoing lane on the right."""
    top = 0.4 * height
    return (
        LaneZone(((0, top), (width / 2, top), (width / 2, height), (0, height)), +1),
        LaneZone(((width / 2, top), (width, top), (width, height), (width / 2, height)), -1),
    )


def _with_default_lanes(s: SensorConfig, width: int, height: int) -> SensorConfig:
    return SensorConfig(s.id, s.position, s.camera_bearing, s.fov_deg, s.socket_in,
                        default_lane_zones(width, height), s.beta)


DEFAULT_SCENARIO = {
    "seed": 42,
    "runs": 1,
    "duration_s": 2.0,
    "frame_interval_ms": 200.0,
    "t_max_ms": budget.T_MAX_MS,
    "k_impact": budget.K_IMPACT,
    "detection_range_m": 400.0,
    "emergency_classes": ["emergency"],
    "frame": {"width": 1920, "height": 1080},
    "grid": {"origin": {"lat": 46.61, "lon": 14.26}, "cell_size_m": 1000.0},
    "sensors": [
        {"id": "S1", "position": {"x": 1500.0, "y": 3500.0}, "camera_bearing": 270.0,
         "fov_deg": 90.0, "socket_in": "127.0.0.1:0"},
    ],
    "users": [
        {"id": "V2", "position": {"x": 1600.0, "y": 3300.0}, "bearing": 0.0, "speed": 20.0},
        {"id": "V1", "position": {"x": 1700.0, "y": 3490.0}, "bearing": 90.0, "speed": 20.0},
    ],
    "emergency_vehicles": [
        {"id": "E1", "class": "emergency", "position": {"x": 1200.0, "y": 3496.0},
         "bearing": 90.0, "speed": 20.0},
    ],
}


def default_scenario(profile: str = "nominal") -> Scenario:
    if profile not in PROFILES:
        raise ScenarioError(f"unknown latency profile {profile!r}; choose from {sorted(PROFILES)}")
    d = copy.deepcopy(DEFAULT_SCENARIO)
    d["latency"] = {k: v.to_dict() for k, v in PROFILES[profile]().items()}
    return Scenario.from_dict(d)


def load_scenario(path: str | Path | None) -> Scenario:
    if path is None:
        return default_scenario()
    try:
        d = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return Scenario.from_dict(d)


# -- synthetic camera ---------------------------------------------------

def render_frame(sc: Scenario, sensor: SensorConfig, t_s: float, frame_id: int,
                 timestamp: float = 0.0) -> DetectionFrame:
    """Boxes a detector would report for vehicles in the camera's view at time ``t_s``.

    Bearing offset from the optical axis sets the horizontal position. Distance
    sets box size and how far below the horizon the box ends; a vehicle right
    in front of the camera touches the bottom edge. Vehicles driving toward the
    camera show their front.
    """
    W, H = sc.frame_width, sc.frame_height
    horizon = 0.45 * H
    boxes = []
    half_fov = sensor.fov_deg / 2.0
    for ev in sc.emergency_vehicles + sc.users:
        p = position_at(ev.trajectory, t_s)
        dx, dy = p.x - sensor.position.x, p.y - sensor.position.y
        dist = math.hypot(dx, dy)
        if dist > sc.detection_range_m or dist < 1e-9:
            continue
        to_obj = math.degrees(math.atan2(dx, dy)) % 360.0
        off = (to_obj - sensor.camera_bearing + 180.0) % 360.0 - 180.0
        if abs(off) > half_fov:
            continue
        cx = (0.5 + off / sensor.fov_deg) * W
        near = min(1.0, 15.0 / dist)
        bottom = horizon + (H - horizon) * near
        h = max(4.0, min(bottom, 0.5 * H * near + 8.0))
        w = max(4.0, min(W, 1.6 * h))
        x = min(max(0.0, cx - w / 2), W - w)
        # velocity pointing at the camera means we see the front
        vx, vy = ev.trajectory.direction
        view = "front" if (vx * -dx + vy * -dy) > 0 else "rear"
        boxes.append(BoundingBox(x, bottom - h, w, h, ev.object_class, view))
    return DetectionFrame(frame_id, sensor.id, timestamp, W, H, tuple(boxes))
