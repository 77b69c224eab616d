"""Local planar coordinates and forward-ray trajectory intersection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

EARTH_RADIUS_M = 6_371_000.0
MAX_ABS_LAT = 85.0
PARALLEL_EPS = 1e-9

TWO_PI = 2.0 * math.pi


class GeoDomainError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise GeoDomainError(f"non-finite coordinate {self}")
        if not -90.0 <= self.lat <= 90.0:
            raise GeoDomainError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise GeoDomainError(f"longitude {self.lon} outside [-180, 180)")


@dataclass(frozen=True)
class CartPoint:
    """Meters east (x) and north (y) of a reference origin."""

    x: float
    y: float

    def __sub__(self, other: CartPoint) -> CartPoint:
        return CartPoint(self.x - other.x, self.y - other.y)

    def dist(self, other: CartPoint) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def normalize_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a tiny negative can round up to exactly 2*pi
    return 0.0 if t >= TWO_PI else t


def bearing_to_theta(bearing: float) -> float:
    """Compass bearing in degrees (0 = north, clockwise) to a Cartesian angle in [0, 2pi)."""
    return normalize_angle(math.pi / 2.0 - math.radians(bearing))


def theta_to_bearing(theta: float) -> float:
    b = math.fmod(90.0 - math.degrees(theta), 360.0)
    if b < 0.0:
        b += 360.0
    return 0.0 if b >= 360.0 else b


def to_cartesian(p: GeoPoint, origin: GeoPoint) -> CartPoint:
    """Equirectangular tangent-plane projection of ``p`` around ``origin``."""
    for q in (p, origin):
        if abs(q.lat) >= MAX_ABS_LAT:
            raise GeoDomainError(f"|lat| must be < {MAX_ABS_LAT}, got {q.lat}")
    dlon = p.lon - origin.lon
    # shortest way around the antimeridian
    if dlon >= 180.0:
        dlon -= 360.0
    elif dlon < -180.0:
        dlon += 360.0
    x = EARTH_RADIUS_M * math.radians(dlon) * math.cos(math.radians(origin.lat))
    y = EARTH_RADIUS_M * math.radians(p.lat - origin.lat)
    return CartPoint(x, y)


def to_geodetic(c: CartPoint, origin: GeoPoint) -> GeoPoint:
    """Inverse of :func:`to_cartesian` for the same origin."""
    lat = origin.lat + math.degrees(c.y / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(c.x / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeoPoint(lat, lon)


@dataclass(frozen=True)
class Trajectory:
    origin: CartPoint
    bearing: float
    speed: float = 0.0
    theta: float = field(init=False)

    def __post_init__(self):
        if not math.isfinite(self.bearing):
            raise GeoDomainError(f"non-finite bearing {self.bearing}")
        if not (math.isfinite(self.speed) and self.speed >= 0.0):
            raise GeoDomainError(f"speed must be >= 0, got {self.speed}")
        b = self.bearing % 360.0
        object.__setattr__(self, "bearing", 0.0 if b >= 360.0 else b)
        object.__setattr__(self, "theta", bearing_to_theta(self.bearing))

    @classmethod
    def from_theta(cls, origin: CartPoint, theta: float, speed: float = 0.0) -> Trajectory:
        tr = cls(origin, theta_to_bearing(theta), speed)
        # keep the caller's exact angle instead of the degree round trip
        object.__setattr__(tr, "theta", normalize_angle(theta))
        return tr

    @property
    def direction(self) -> tuple[float, float]:
        return math.cos(self.theta), math.sin(self.theta)

    def point_at(self, t: float) -> CartPoint:
        """Point ``t`` meters along the ray."""
        c, s = self.direction
        return CartPoint(self.origin.x + t * c, self.origin.y + t * s)


def position_at(tr: Trajectory, elapsed: float) -> CartPoint:
    if elapsed < 0.0:
        raise GeoDomainError(f"elapsed must be >= 0, got {elapsed}")
    return tr.point_at(tr.speed * elapsed)


class NoIntersectionReason(Enum):
    PARALLEL = "parallel"
    BEHIND = "behind"


@dataclass(frozen=True)
class NoIntersection:
    reason: NoIntersectionReason
    t_u: Optional[float] = None
    t_s: Optional[float] = None


@dataclass(frozen=True)
class IntersectionSolution:
    t_u: float
    t_s: float
    point: CartPoint
    eta_u: Optional[float]
    eta_s: Optional[float]


def intersect(u: Trajectory, s: Trajectory) -> Union[IntersectionSolution, NoIntersection]:
    """Solve P_u + t_u*d_u = P_s + t_s*d_s for forward ray parameters.

    The 2x2 system ``[[cu, -cs], [su, -ss]] @ [t_u, t_s] = P_s - P_u`` is solved
    by Cramer's rule. ``t_u``/``t_s`` are meters along each ray; ETAs divide by
    speed and are ``None`` for a stationary trajectory.
    """
    cu, su = u.direction
    cs, ss = s.direction
    det = -cu * ss + su * cs
    if abs(det) < PARALLEL_EPS:
        return NoIntersection(NoIntersectionReason.PARALLEL)
    bx = s.origin.x - u.origin.x
    by = s.origin.y - u.origin.y
    t_u = (-bx * ss + cs * by) / det
    t_s = (cu * by - su * bx) / det
    if t_u < 0.0 or t_s < 0.0:
        return NoIntersection(NoIntersectionReason.BEHIND, t_u, t_s)
    return IntersectionSolution(
        t_u=t_u,
        t_s=t_s,
        point=u.point_at(t_u),
        eta_u=t_u / u.speed if u.speed > 0 else None,
        eta_s=t_s / s.speed if s.speed > 0 else None,
    )
