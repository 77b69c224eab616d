import math

import pytest
from hypothesis import given, strategies as st

from crosscheck import check_solver_against_sampling
from oracles import haversine
from trafficsafe.geo import (
    CartPoint,
    GeoDomainError,
    GeoPoint,
    IntersectionSolution,
    NoIntersection,
    NoIntersectionReason,
    Trajectory,
    bearing_to_theta,
    intersect,
    position_at,
    to_cartesian,
    to_geodetic,
)


def test_to_cartesian_identity():
    o = GeoPoint(46.62, 14.30)
    assert to_cartesian(o, o) == CartPoint(0.0, 0.0)


def test_to_cartesian_north_offset_matches_great_circle():
    c = to_cartesian(GeoPoint(0.01, 0), GeoPoint(0, 0))
    assert c.x == pytest.approx(0.0, abs=1e-9)
    assert c.y == pytest.approx(haversine(0, 0, 0.01, 0), abs=0.5)
    assert c.y == pytest.approx(1111.949, abs=0.001)


def test_to_cartesian_east_offset_at_60_deg():
    c = to_cartesian(GeoPoint(60, 0.01), GeoPoint(60, 0))
    assert c.y == pytest.approx(0.0, abs=1e-9)
    assert c.x == pytest.approx(haversine(60, 0, 60, 0.01), abs=0.5)
    assert c.x == pytest.approx(555.97, abs=0.01)


@pytest.mark.parametrize("lat,lon", [(91, 0), (-91, 0), (0, 180), (0, -180.5), (math.nan, 0)])
def test_geopoint_range(lat, lon):
    with pytest.raises(GeoDomainError):
        GeoPoint(lat, lon)


def test_to_cartesian_rejects_polar():
    with pytest.raises(GeoDomainError):
        to_cartesian(GeoPoint(86, 0), GeoPoint(85.5, 0))


def _patch_distance_error(lat0, lon0, pts):
    origin = GeoPoint(lat0, lon0)
    geos = [to_geodetic(CartPoint(x, y), origin) for x, y in pts]
    a, b = (to_cartesian(g, origin) for g in geos)
    for (x, y), c in zip(pts, (a, b)):
        assert c.x == pytest.approx(x, abs=1e-6) and c.y == pytest.approx(y, abs=1e-6)
    true = haversine(geos[0].lat, geos[0].lon, geos[1].lat, geos[1].lon)
    return abs(a.dist(b) - true), true


patch = st.lists(st.tuples(st.floats(-5000, 5000), st.floats(-5000, 5000)), min_size=2, max_size=2)


# cos(lat) drifts across the patch by ~tan(lat) * 5 km / R; 0.1 % holds up to ~45 deg
@given(lat0=st.floats(-45, 45), lon0=st.floats(-179, 179), pts=patch)
def test_projection_preserves_distances_mid_latitudes(lat0, lon0, pts):
    err, true = _patch_distance_error(lat0, lon0, pts)
    if true > 1.0:
        assert err <= 1e-3 * true


@given(lat0=st.floats(-70, 70), lon0=st.floats(-179, 179), pts=patch)
def test_projection_distortion_bounded_to_70_deg(lat0, lon0, pts):
    err, true = _patch_distance_error(lat0, lon0, pts)
    if true > 1.0:
        assert err <= 3e-3 * true


@pytest.mark.parametrize("bearing,theta", [
    (0, math.pi / 2), (90, 0.0), (180, 3 * math.pi / 2), (270, math.pi), (360, math.pi / 2), (-90, math.pi),
])
def test_bearing_to_theta_axes(bearing, theta):
    assert bearing_to_theta(bearing) == pytest.approx(theta, abs=1e-12)


@given(st.floats(0, 360, exclude_max=True))
def test_bearing_to_theta_range_and_direction(b):
    th = bearing_to_theta(b)
    assert 0 <= th < 2 * math.pi
    # compass convention: east component sin(b), north component cos(b)
    assert math.cos(th) == pytest.approx(math.sin(math.radians(b)), abs=1e-12)
    assert math.sin(th) == pytest.approx(math.cos(math.radians(b)), abs=1e-12)


def test_bearing_to_theta_injective_on_grid():
    thetas = {round(bearing_to_theta(b / 10), 9) for b in range(3600)}
    assert len(thetas) == 3600


def test_intersect_perpendicular_axes():
    u = Trajectory.from_theta(CartPoint(0, 0), 0.0)
    s = Trajectory.from_theta(CartPoint(5, -5), math.pi / 2)
    sol = intersect(u, s)
    assert isinstance(sol, IntersectionSolution)
    assert sol.t_u == pytest.approx(5) and sol.t_s == pytest.approx(5)
    assert sol.point.x == pytest.approx(5) and sol.point.y == pytest.approx(0, abs=1e-12)


def test_intersect_parallel():
    u = Trajectory.from_theta(CartPoint(0, 0), 0.0)
    s = Trajectory.from_theta(CartPoint(0, 3), 0.0)
    assert intersect(u, s) == NoIntersection(NoIntersectionReason.PARALLEL)


def test_intersect_behind():
    u = Trajectory(CartPoint(0, 0), 90)   # east
    s = Trajectory(CartPoint(-5, -5), 0)  # north, crosses at x=-5 behind u
    sol = intersect(u, s)
    assert isinstance(sol, NoIntersection) and sol.reason is NoIntersectionReason.BEHIND
    assert sol.t_u == pytest.approx(-5)


def test_intersect_eta():
    u = Trajectory(CartPoint(0, 0), 90, 20)
    s = Trajectory(CartPoint(100, -50), 0, 10)
    sol = intersect(u, s)
    assert sol.eta_u == pytest.approx(5.0) and sol.eta_s == pytest.approx(5.0)
    assert intersect(Trajectory(CartPoint(0, 0), 90), s).eta_u is None


@given(st.floats(0, 360, exclude_max=True), st.integers(-3, 3),
       st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))
def test_parallel_always_detected(b, k, x, y):
    u = Trajectory.from_theta(CartPoint(0, 0), bearing_to_theta(b))
    s = Trajectory.from_theta(CartPoint(x, y), bearing_to_theta(b) + k * math.pi)
    assert intersect(u, s) == NoIntersection(NoIntersectionReason.PARALLEL)


coord = st.floats(-5000, 5000)


@given(coord, coord, st.floats(0, 360, exclude_max=True), coord, coord, st.floats(0, 360, exclude_max=True))
def test_returned_point_lies_on_both_rays(xu, yu, bu, xs, ys, bs):
    u = Trajectory(CartPoint(xu, yu), bu)
    s = Trajectory(CartPoint(xs, ys), bs)
    sol = intersect(u, s)
    if isinstance(sol, IntersectionSolution):
        assert sol.t_u >= 0 and sol.t_s >= 0
        assert sol.point.dist(u.point_at(sol.t_u)) < 1e-6
        # tolerance scales with conditioning; non-degenerate crossings stay well under 1e-6
        if abs(math.sin(u.theta - s.theta)) > 1e-3:
            assert sol.point.dist(s.point_at(sol.t_s)) < 1e-6


def test_solver_matches_sampling_oracle_1000():
    checked, mismatches, worst = check_solver_against_sampling(1000, seed=1)
    assert mismatches == 0
    assert worst < 0.02


def test_position_at_examples():
    assert position_at(Trajectory.from_theta(CartPoint(0, 0), 0.0, 20), 2) == CartPoint(40, 0)
    tr = Trajectory(CartPoint(3, 4), 0, 10)
    assert position_at(tr, 0) == CartPoint(3, 4)
    p = position_at(Trajectory.from_theta(CartPoint(3, 4), math.pi / 2, 10), 1.5)
    assert p.x == pytest.approx(3) and p.y == pytest.approx(19)


def test_position_at_negative_elapsed():
    with pytest.raises(GeoDomainError):
        position_at(Trajectory(CartPoint(0, 0), 0, 1), -0.1)


def test_trajectory_rejects_negative_speed():
    with pytest.raises(GeoDomainError):
        Trajectory(CartPoint(0, 0), 0, -1)
