import itertools

import pytest
from hypothesis import given, strategies as st
from shapely.geometry import Point, Polygon

from trafficsafe.direction import (
    AWAY,
    TOWARD,
    BoundingBox,
    DetectionFrame,
    DirectionConfigError,
    Heading,
    LaneZone,
    classify_box,
    combine,
    d_bb,
    d_eb,
    d_mod,
    object_bearing,
)

W, H = 1920, 1080
LEFT = LaneZone(((0, 400), (960, 400), (960, 1080), (0, 1080)), TOWARD)
RIGHT = LaneZone(((960, 400), (1920, 400), (1920, 1080), (960, 1080)), AWAY)


def box(x=100, y=300, w=80, h=60, view=None, label="emergency"):
    return BoundingBox(x, y, w, h, label, view)


def test_d_bb_zones():
    assert d_bb(box(x=200, y=500), [LEFT, RIGHT]) == TOWARD
    assert d_bb(box(x=1200, y=500), [LEFT, RIGHT]) == AWAY
    # anchor above both lanes
    assert d_bb(box(x=1200, y=100, h=50), [LEFT, RIGHT]) == TOWARD


def test_d_bb_needs_zones():
    with pytest.raises(DirectionConfigError):
        d_bb(box(), [])


def test_d_eb_threshold():
    assert d_eb(box(y=940, h=60), 1080, 0.2) == AWAY     # bottom 1000 > 864
    assert d_eb(box(y=240, h=60), 1080, 0.2) == TOWARD   # bottom 300
    assert d_eb(box(y=804, h=60), 1080, 0.2) == TOWARD   # bottom exactly 864


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.1])
def test_d_eb_beta_range(beta):
    with pytest.raises(DirectionConfigError):
        d_eb(box(), 1080, beta)


@given(st.floats(1, 500), st.floats(0, 500), st.floats(0.05, 0.95))
def test_d_eb_monotone(y, dy, beta):
    low = d_eb(box(y=y + dy, h=10), 2000, beta)
    high = d_eb(box(y=y, h=10), 2000, beta)
    assert not (high == AWAY and low == TOWARD)


def test_d_mod():
    assert d_mod(box(view="front")) == TOWARD
    assert d_mod(box(view="rear")) == AWAY
    assert d_mod(box()) == TOWARD


@pytest.mark.parametrize("votes,heading", [
    ((1, 1, -1), Heading.TOWARD), ((-1, -1, -1), Heading.AWAY), ((1, -1, -1), Heading.AWAY),
])
def test_combine_examples(votes, heading):
    assert combine(*votes) is heading


def test_combine_is_majority_and_symmetric():
    for votes in itertools.product((1, -1), repeat=3):
        majority = Heading.TOWARD if votes.count(1) >= 2 else Heading.AWAY
        assert combine(*votes) is majority
        for perm in itertools.permutations(votes):
            assert combine(*perm) is majority


def test_combine_rejects_non_votes():
    with pytest.raises(ValueError):
        combine(1, 0, 1)


def test_classify_box():
    approaching = box(x=300, y=450, w=60, h=40, view="front")
    leaving = box(x=1300, y=900, w=300, h=170, view="rear")
    assert classify_box(approaching, H, [LEFT, RIGHT]) is Heading.TOWARD
    assert classify_box(leaving, H, [LEFT, RIGHT]) is Heading.AWAY


@pytest.mark.parametrize("camera,heading,expected", [
    (0, Heading.TOWARD, 180), (270, Heading.TOWARD, 90), (90, Heading.TOWARD, 270),
    (0, Heading.AWAY, 0), (200, Heading.TOWARD, 20),
])
def test_object_bearing(camera, heading, expected):
    assert object_bearing(camera, heading) == expected


poly_pts = st.lists(st.tuples(st.integers(0, 100), st.integers(0, 100)), min_size=3, max_size=7)


@given(poly_pts, st.floats(0, 100), st.floats(0, 100))
def test_lane_zone_containment_matches_shapely(pts, x, y):
    try:
        zone = LaneZone(tuple(pts), TOWARD)
    except DirectionConfigError:
        return
    shape = Polygon(pts)
    if not shape.is_valid or shape.area == 0:
        return
    # shapely's covers includes the boundary, as does ours
    assert zone.contains(x, y) == shape.covers(Point(x, y))


def test_lane_zone_rejects_bowtie():
    with pytest.raises(DirectionConfigError):
        LaneZone(((0, 0), (10, 10), (10, 0), (0, 10)), TOWARD)


def test_lane_zone_rejects_bad_vote():
    with pytest.raises(DirectionConfigError):
        LaneZone(((0, 0), (10, 0), (0, 10)), 0)


def test_box_and_frame_validation():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 5, "car")
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 5, 5, "car", "side")
    with pytest.raises(ValueError):
        DetectionFrame(1, "S1", 0, 100, 100, (BoundingBox(90, 0, 20, 5, "car"),))
    f = DetectionFrame(1, "S1", 0, 100, 100, (BoundingBox(10, 20, 5, 5, "car", "rear"),))
    assert DetectionFrame.from_dict(f.to_dict()) == f
