"""Great-circle distance on a spherical Earth.

Coordinates are stored in degrees (as delivered by receivers) and converted
to radians once at the boundary. All trig runs in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gnss_sentry.errors import InvalidInputError

MEAN_EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat_deg) and math.isfinite(self.lon_deg)):
            raise InvalidInputError(f"non-finite coordinate ({self.lat_deg}, {self.lon_deg})")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise InvalidInputError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise InvalidInputError(f"longitude {self.lon_deg} outside [-180, 180]")

    @property
    def lat_rad(self) -> float:
        return self.lat_deg * (math.pi / 180.0)

    @property
    def lon_rad(self) -> float:
        return self.lon_deg * (math.pi / 180.0)


@dataclass(frozen=True)
class EarthModel:
    radius_m: float = MEAN_EARTH_RADIUS_M

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius_m) and self.radius_m > 0):
            raise InvalidInputError(f"earth radius must be positive, got {self.radius_m}")


DEFAULT_EARTH = EarthModel()


def hav(theta: float) -> float:
    """Haversine of an angle in radians, ``sin(theta/2) ** 2``."""
    if not math.isfinite(theta):
        raise InvalidInputError(f"non-finite angle {theta}")
    s = math.sin(theta / 2.0)
    return s * s


def central_angle(a: GeoPoint, b: GeoPoint) -> float:
    """Angle subtended at the Earth's centre by ``a`` and ``b``, in radians."""
    phi1, phi2 = a.lat_rad, b.lat_rad
    # Symmetric under swap: hav() is even and the cosine product commutes.
    h = hav(phi2 - phi1) + math.cos(phi1) * math.cos(phi2) * hav(b.lon_rad - a.lon_rad)
    h = min(max(h, 0.0), 1.0)
    return 2.0 * math.asin(math.sqrt(h))


def haversine_distance(a: GeoPoint, b: GeoPoint, earth: EarthModel = DEFAULT_EARTH) -> float:
    """Great-circle distance in meters between two points.

    Args:
        a: First point.
        b: Second point.
        earth: Sphere to measure on; defaults to the mean Earth radius.

    Returns:
        Distance in meters, in ``[0, pi * earth.radius_m]``.
    """
    return earth.radius_m * central_angle(a, b)


def haversine_many(
    lat1_deg: np.ndarray,
    lon1_deg: np.ndarray,
    lat2_deg: np.ndarray,
    lon2_deg: np.ndarray,
    earth: EarthModel = DEFAULT_EARTH,
) -> np.ndarray:
    """Vectorised :func:`haversine_distance` over coordinate arrays in degrees."""
    k = math.pi / 180.0
    phi1 = np.asarray(lat1_deg, dtype=np.float64) * k
    phi2 = np.asarray(lat2_deg, dtype=np.float64) * k
    lam1 = np.asarray(lon1_deg, dtype=np.float64) * k
    lam2 = np.asarray(lon2_deg, dtype=np.float64) * k
    if not (np.all(np.isfinite(phi1)) and np.all(np.isfinite(phi2))
            and np.all(np.isfinite(lam1)) and np.all(np.isfinite(lam2))):
        raise InvalidInputError("non-finite coordinate in input arrays")
    h = np.sin((phi2 - phi1) / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin((lam2 - lam1) / 2.0) ** 2
    return earth.radius_m * 2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from ``a`` to ``b`` in radians (0 = north, clockwise)."""
    phi1, phi2 = a.lat_rad, b.lat_rad
    dlon = b.lon_rad - a.lon_rad
    x = math.sin(dlon) * math.cos(phi2)
    y = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlon)
    return math.atan2(x, y)


def destination(origin: GeoPoint, bearing_rad: float, distance_m: float,
                earth: EarthModel = DEFAULT_EARTH) -> GeoPoint:
    """Point reached by travelling ``distance_m`` along a great circle from ``origin``."""
    delta = distance_m / earth.radius_m
    phi1, lam1 = origin.lat_rad, origin.lon_rad
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(bearing_rad)
    phi2 = math.asin(min(max(sin_phi2, -1.0), 1.0))
    lam2 = lam1 + math.atan2(
        math.sin(bearing_rad) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    lon = (math.degrees(lam2) + 540.0) % 360.0 - 180.0
    return GeoPoint(math.degrees(phi2), lon)


def interpolate_great_circle(a: GeoPoint, b: GeoPoint, fraction: float) -> GeoPoint:
    """Point a ``fraction`` of the way from ``a`` to ``b`` along their great circle."""
    if fraction <= 0.0:
        return a
    if fraction >= 1.0:
        return b
    delta = central_angle(a, b)
    if delta == 0.0:
        return a
    sd = math.sin(delta)
    wa = math.sin((1.0 - fraction) * delta) / sd
    wb = math.sin(fraction * delta) / sd
    phi1, lam1, phi2, lam2 = a.lat_rad, a.lon_rad, b.lat_rad, b.lon_rad
    x = wa * math.cos(phi1) * math.cos(lam1) + wb * math.cos(phi2) * math.cos(lam2)
    y = wa * math.cos(phi1) * math.sin(lam1) + wb * math.cos(phi2) * math.sin(lam2)
    z = wa * math.sin(phi1) + wb * math.sin(phi2)
    lat = math.degrees(math.atan2(z, math.hypot(x, y)))
    lon = math.degrees(math.atan2(y, x))
    return GeoPoint(lat, lon)
