"""Independent reference computations used by the tests.

None of these call into the code under test for the quantity they check.
"""

from __future__ import annotations

import math

import numpy as np

R_EARTH = 6_371_000.0


def haversine(lat1, lon1, lat2, lon2, r=R_EARTH):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(a))


def _ray_points(px, py, bearing_deg, ts):
    # compass bearing: x = sin(b), y = cos(b)
    b = math.radians(bearing_deg)
    return px + ts * math.sin(b), py + ts * math.cos(b)


def sampled_closest_approach(u, s, length=5000.0, step=0.01, coarse=1.0, window=3.0):
    """Closest pair of sample points on two rays, each sampled every ``step`` m on [0, length].

    ``u`` and ``s`` are (x, y, bearing_deg). A 1 m pass locates the region, then
    both rays are sampled at ``step`` around it. Returns (distance, midpoint).
    """
    bu, bs = math.radians(u[2]), math.radians(s[2])
    du = np.array([math.sin(bu), math.cos(bu)])
    ds = np.array([math.sin(bs), math.cos(bs)])
    pu = np.array(u[:2], float)
    ps = np.array(s[:2], float)

    def nearest_on_s(points, spacing, lo=0.0, hi=length):
        # nearest sample index on S for each point, then that sample's position
        proj = (points - ps) @ ds
        k = np.clip(np.rint((proj - lo) / spacing), 0, round((hi - lo) / spacing))
        return ps + np.outer(lo + k * spacing, ds)

    tc = np.arange(0.0, length + coarse / 2, coarse)
    uc = pu + np.outer(tc, du)
    sc = nearest_on_s(uc, coarse)
    dc = np.hypot(*(uc - sc).T)
    t0 = tc[int(np.argmin(dc))]

    lo, hi = max(0.0, t0 - window), min(length, t0 + window)
    tf = lo + step * np.arange(0, round((hi - lo) / step) + 1)
    uf = pu + np.outer(tf, du)
    # fine S samples lie on the global step grid of S
    sf = nearest_on_s(uf, step)
    df = np.hypot(*(uf - sf).T)
    i = int(np.argmin(df))
    mid = (uf[i] + sf[i]) / 2
    return float(df[i]), (float(mid[0]), float(mid[1]))


def line_intersection_lstsq(u, s):
    """Crossing of two compass-bearing lines via numpy's solver, or None when parallel."""
    bu, bs = math.radians(u[2]), math.radians(s[2])
    a = np.array([[math.sin(bu), -math.sin(bs)], [math.cos(bu), -math.cos(bs)]])
    if abs(np.linalg.det(a)) < 1e-9:
        return None
    t = np.linalg.solve(a, np.array([s[0] - u[0], s[1] - u[1]]))
    x, y = _ray_points(u[0], u[1], u[2], t[0])
    return float(t[0]), float(t[1]), float(x), float(y)


def truth_table_level(user, sensor, event, d=1000.0):
    """Threat level straight from the three cell rules, with no shared code.

    ``user``/``sensor`` are (x, y, bearing_deg). Returns one of
    "alarm", "warning1", "warning2", "none".
    """
    cu = (math.floor(user[0] / d), math.floor(user[1] / d))
    cs = (math.floor(sensor[0] / d), math.floor(sensor[1] / d))
    same = cu == cs
    adjacent = max(abs(cu[0] - cs[0]), abs(cu[1] - cs[1])) == 1

    hit = line_intersection_lstsq(user, sensor)
    in_user_cell = False
    if hit is not None:
        tu, ts, x, y = hit
        if tu >= 0 and ts >= 0:
            in_user_cell = (cu[0] * d <= x <= (cu[0] + 1) * d) and (cu[1] * d <= y <= (cu[1] + 1) * d)

    alarm = event and in_user_cell and same
    warning1 = event and in_user_cell and adjacent
    warning2 = event and same
    if alarm:
        return "alarm"
    if warning1:
        return "warning1"
    if warning2:
        return "warning2"
    return "none"
