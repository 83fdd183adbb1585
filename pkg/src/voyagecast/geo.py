"""Spherical-earth geodesy primitives: distance, bearing, speed, angle wrapping.

All functions assume a spherical earth of radius 6371 km and take coordinates
in decimal degrees. Bearings are computed in degrees and converted to gradians
(400 per turn) only where a caller asks for them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_KM = 6371.0
KM_PER_NMI = 1.852
GRAD_PER_DEG = 400.0 / 360.0

# law-of-cosines argument this close to +/-1 means near-coincident or
# near-antipodal points, where the haversine form is better conditioned
_COS_CLAMP = 1.0 - 1e-12


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude pair in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            object.__setattr__(self, "lon", wrap_lon(self.lon))


@dataclass(frozen=True)
class Kinematics:
    """Per-fix motion state: speed, acceleration, bearing and bearing rate.

    Speed is in knots, acceleration in knots/hour, bearing in gradians in
    [0, 400) and the bearing rate in gradians wrapped to [-200, 200].
    """

    v: float
    dv: float
    theta: float
    dtheta: float


def wrap_lon(lon: float) -> float:
    """Wrap a longitude into [-180, 180]."""
    wrapped = math.fmod(lon + 180.0, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    return wrapped - 180.0


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in kilometers.

    Uses the spherical law of cosines, falling back to the haversine form
    when the cosine argument saturates (coincident or antipodal points).
    """
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlon = math.radians(b.lon - a.lon)
    cos_arg = (
        math.sin(phi1) * math.sin(phi2)
        + math.cos(phi1) * math.cos(phi2) * math.cos(dlon)
    )
    if abs(cos_arg) < _COS_CLAMP:
        return EARTH_RADIUS_KM * math.acos(cos_arg)
    dphi = math.radians(b.lat - a.lat)
    h = (
        math.sin(dphi / 2.0) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin(dlon / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from a to b, degrees in [0, 360).

    Raises ValueError for coincident points, where the bearing is undefined.
    """
    if a.lat == b.lat and a.lon == b.lon:
        raise ValueError("undefined bearing for coincident points")
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlon = math.radians(b.lon - a.lon)
    y = math.sin(dlon) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlon)
    return (math.degrees(math.atan2(y, x)) + 360.0) % 360.0


def to_gradian(deg: float) -> float:
    """Convert degrees to gradians, wrapped into [0, 400)."""
    return (deg * GRAD_PER_DEG) % 400.0


def speed_knots(a: GeoPoint, b: GeoPoint, dt_hours: float) -> float:
    """Mean speed in knots to cover the great-circle leg a->b in dt_hours."""
    if dt_hours <= 0:
        raise ValueError(f"non-positive interval {dt_hours}")
    return haversine_km(a, b) / KM_PER_NMI / dt_hours


def delta_bearing(theta1_deg: float, theta2_deg: float) -> float:
    """Signed bearing change theta2 - theta1, wrapped into [-180, 180]."""
    d = theta2_deg - theta1_deg
    while d > 180.0:
        d -= 360.0
    while d < -180.0:
        d += 360.0
    return d


def delta_gradian(dtheta_deg: float) -> float:
    """Convert a wrapped degree delta in [-180, 180] to gradians [-200, 200]."""
    return dtheta_deg * GRAD_PER_DEG
