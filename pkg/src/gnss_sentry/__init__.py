"""GNSS spoofing detection from predicted per-step traveled distance."""

from gnss_sentry.errors import (
    DegenerateFeatureError,
    FormatError,
    GnssSentryError,
    InvalidInputError,
    VersionError,
)
from gnss_sentry.geodesy import EarthModel, GeoPoint, haversine_distance

__version__ = "0.1.0"

__all__ = [
    "DegenerateFeatureError",
    "EarthModel",
    "FormatError",
    "GeoPoint",
    "GnssSentryError",
    "InvalidInputError",
    "VersionError",
    "haversine_distance",
]
