"""Single-frame driving direction from three +/-1 cues.

Each cue votes +1 (heading toward the camera) or -1 (moving away):

* lane zones: the box's ground anchor falls in an operator-drawn lane polygon
* bottom emergence: vehicles driving away first show up near the bottom edge
* view model: the detector tagged the box as a front or rear view

The vehicle is heading toward the camera when the votes sum to 1 or more.
Cues that cannot decide vote +1; a spurious "toward" only over-warns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

TOWARD = 1
AWAY = -1

DEFAULT_BETA = 0.2


class DirectionConfigError(ValueError):
    pass


class Heading(str, Enum):
    TOWARD = "toward"
    AWAY = "away"


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float
    class_label: str
    view_label: Optional[str] = None

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be non-negative, got ({self.x}, {self.y})")
        if self.view_label not in (None, "front", "rear"):
            raise ValueError(f"unknown view label {self.view_label!r}")

    @property
    def anchor(self) -> tuple[float, float]:
        """Bottom-center point, roughly where the vehicle touches the road."""
        return self.x + self.w / 2, self.y + self.h

    @property
    def bottom(self) -> float:
        return self.y + self.h

    def to_dict(self) -> dict:
        d = {"x": self.x, "y": self.y, "w": self.w, "h": self.h, "class_label": self.class_label}
        if self.view_label is not None:
            d["view_label"] = self.view_label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> BoundingBox:
        return cls(d["x"], d["y"], d["w"], d["h"], d["class_label"], d.get("view_label"))


@dataclass(frozen=True)
class DetectionFrame:
    frame_id: int
    sensor_id: str
    timestamp: float
    width: int
    height: int
    boxes: tuple[BoundingBox, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "boxes", tuple(self.boxes))
        for b in self.boxes:
            if b.x + b.w > self.width or b.y + b.h > self.height:
                raise ValueError(f"box {b} exceeds frame {self.width}x{self.height}")

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "sensor_id": self.sensor_id,
            "timestamp": self.timestamp,
            "width": self.width,
            "height": self.height,
            "boxes": [b.to_dict() for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> DetectionFrame:
        return cls(
            d["frame_id"], d["sensor_id"], d["timestamp"], d["width"], d["height"],
            tuple(BoundingBox.from_dict(b) for b in d.get("boxes", ())),
        )


def _polygon_contains(poly: Sequence[tuple[float, float]], x: float, y: float) -> bool:
    # even-odd ray casting; points on an edge count as inside
    inside = False
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if cross == 0 and min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2):
            return True
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0
            and orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def is_simple_polygon(poly: Sequence[tuple[float, float]]) -> bool:
    n = len(poly)
    if n < 3:
        return False
    edges = [(poly[k], poly[(k + 1) % n]) for k in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            if b == a + 1 or (a == 0 and b == n - 1):
                continue
            if _segments_cross(*edges[a], *edges[b]):
                return False
    return True


@dataclass(frozen=True)
class LaneZone:
    polygon: tuple[tuple[float, float], ...]
    vote: int

    def __post_init__(self):
        poly = tuple((float(x), float(y)) for x, y in self.polygon)
        object.__setattr__(self, "polygon", poly)
        if self.vote not in (TOWARD, AWAY):
            raise DirectionConfigError(f"lane vote must be +1 or -1, got {self.vote}")
        if not is_simple_polygon(poly):
            raise DirectionConfigError("lane polygon must have >= 3 vertices and not self-intersect")

    def contains(self, x: float, y: float) -> bool:
        return _polygon_contains(self.polygon, x, y)

    def to_dict(self) -> dict:
        return {"polygon": [list(p) for p in self.polygon], "vote": self.vote}

    @classmethod
    def from_dict(cls, d: dict) -> LaneZone:
        return cls(tuple(tuple(p) for p in d["polygon"]), int(d["vote"]))


def d_bb(box: BoundingBox, zones: Sequence[LaneZone]) -> int:
    if not zones:
        raise DirectionConfigError("no lane zones configured for this sensor")
    ax, ay = box.anchor
    for z in zones:
        if z.contains(ax, ay):
            return z.vote
    return TOWARD


def d_eb(box: BoundingBox, frame_h: float, beta: float = DEFAULT_BETA) -> int:
    if not 0.0 < beta < 1.0:
        raise DirectionConfigError(f"beta must be in (0, 1), got {beta}")
    return AWAY if box.bottom > (1.0 - beta) * frame_h else TOWARD


def d_mod(box: BoundingBox) -> int:
    return AWAY if box.view_label == "rear" else TOWARD


def combine(v_bb: int, v_eb: int, v_mod: int) -> Heading:
    for v in (v_bb, v_eb, v_mod):
        if v not in (TOWARD, AWAY):
            raise ValueError(f"vote must be +1 or -1, got {v}")
    return Heading.TOWARD if v_bb + v_eb + v_mod >= 1 else Heading.AWAY


def classify_box(box: BoundingBox, frame_h: float, zones: Sequence[LaneZone],
                 beta: float = DEFAULT_BETA) -> Heading:
    return combine(d_bb(box, zones), d_eb(box, frame_h, beta), d_mod(box))


def object_bearing(camera_bearing: float, heading: Heading) -> float:
    """Compass bearing of a detected vehicle's travel, from the camera's facing.

    A vehicle driving toward a north-facing camera travels south (180).
    """
    if heading is Heading.TOWARD:
        return (camera_bearing + 180.0) % 360.0
    return camera_bearing % 360.0
