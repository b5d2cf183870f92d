"""Spoofed-trajectory construction.

Two attack generators:

* :func:`inject_spoof` splices a drawn route (KML LineString or CSV) into a
  true trajectory. After the onset the reported position walks along the route
  by the vehicle's true per-step odometry, so the lie is kinematically smooth.
* :func:`synth_deviation` pushes each post-onset fix sideways by a linearly
  growing cross-track offset.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from gnss_sentry.errors import FormatError, InvalidInputError
from gnss_sentry.geodesy import (
    DEFAULT_EARTH,
    EarthModel,
    GeoPoint,
    haversine_distance,
    interpolate_great_circle,
)
from gnss_sentry.streams import GnssFix


@dataclass(frozen=True)
class Route:
    points: tuple[GeoPoint, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise InvalidInputError(f"a route needs at least 2 points, got {len(self.points)}")
        for k, (a, b) in enumerate(zip(self.points, self.points[1:]), start=1):
            if a == b:
                raise InvalidInputError(f"route points {k} and {k + 1} are identical")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SpoofScenario:
    truth: tuple[GnssFix, ...]
    spoof_route: Route
    onset_index: int

    def __post_init__(self) -> None:
        if not 0 < self.onset_index < len(self.truth):
            raise InvalidInputError(
                f"onset_index must satisfy 0 < onset < {len(self.truth)}, got {self.onset_index}"
            )


# ------------------------------------------------------------------ route I/O


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1] if isinstance(tag, str) else ""


def parse_kml_route(text: str | bytes) -> Route:
    """Read the first LineString ``<coordinates>`` block of a KML document.

    Tokens are ``lon,lat[,alt]``; altitude is dropped.

    Raises:
        FormatError: not XML, no coordinates block, or a malformed token
            (``err.token`` holds its 1-based index).
        InvalidInputError: a coordinate is out of range or the route is degenerate.
    """
    try:
        root = ET.fromstring(text)
    except (ET.ParseError, ValueError, TypeError, LookupError) as exc:
        raise FormatError(f"not a well-formed KML document: {exc}") from None
    coords = None
    for el in root.iter():
        if _local(el.tag) == "LineString":
            coords = next((c for c in el.iter() if _local(c.tag) == "coordinates"), None)
            if coords is not None:
                break
    if coords is None:
        raise FormatError("no LineString <coordinates> block found")
    tokens = (coords.text or "").split()
    if not tokens:
        raise FormatError("empty <coordinates> block")
    points = []
    for k, tok in enumerate(tokens, start=1):
        parts = tok.split(",")
        if len(parts) not in (2, 3):
            raise FormatError(f"expected lon,lat[,alt] but got {len(parts)} field(s)", token=k)
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"unparsable number in {tok!r}", token=k) from None
        lon, lat = values[0], values[1]
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise FormatError("non-finite coordinate", token=k)
        points.append(GeoPoint(lat, lon))
    return Route(tuple(points))


def format_kml_route(route: Route, name: str = "spoofed route") -> str:
    """Serialize a route as a minimal KML document readable by :func:`parse_kml_route`."""
    coords = " ".join(f"{p.lon_deg!r},{p.lat_deg!r},0" for p in route.points)
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        '<kml xmlns="http://www.opengis.net/kml/2.2">\n'
        "  <Document>\n"
        "    <Placemark>\n"
        f"      <name>{name}</name>\n"
        "      <LineString>\n"
        "        <tessellate>1</tessellate>\n"
        f"        <coordinates>{coords}</coordinates>\n"
        "      </LineString>\n"
        "    </Placemark>\n"
        "  </Document>\n"
        "</kml>\n"
    )


def parse_csv_route(text: str) -> Route:
    """Read a route from CSV text with header ``lat_deg,lon_deg``."""
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader, [])]
    if "lat_deg" not in header or "lon_deg" not in header:
        raise FormatError("route CSV header must contain lat_deg,lon_deg", line=1)
    ilat, ilon = header.index("lat_deg"), header.index("lon_deg")
    points = []
    for row in reader:
        if not row:
            continue
        try:
            lat, lon = float(row[ilat]), float(row[ilon])
        except (IndexError, ValueError):
            raise FormatError("unparsable route row", line=reader.line_num) from None
        try:
            points.append(GeoPoint(lat, lon))
        except InvalidInputError as exc:
            raise FormatError(str(exc), line=reader.line_num) from None
    return Route(tuple(points))


def load_route(path: str | Path) -> Route:
    """Load a ``.kml`` or ``.csv`` route file, chosen by extension."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InvalidInputError(f"cannot read route {path}: {exc.strerror or exc}") from exc
    if path.suffix.lower() == ".kml":
        return parse_kml_route(data)
    try:
        return parse_csv_route(data.decode("utf-8"))
    except UnicodeDecodeError:
        raise FormatError(f"{path.name} is not UTF-8 text") from None


# ------------------------------------------------------------------ attacks


def _route_arclength(route: Route, earth: EarthModel) -> list[float]:
    cum = [0.0]
    for a, b in zip(route.points, route.points[1:]):
        cum.append(cum[-1] + haversine_distance(a, b, earth))
    return cum


def point_at_arclength(route: Route, s: float, cum: Sequence[float] | None = None,
                       earth: EarthModel = DEFAULT_EARTH) -> GeoPoint:
    """Point at distance ``s`` along ``route``; clamps to the endpoints."""
    if cum is None:
        cum = _route_arclength(route, earth)
    if s <= 0.0:
        return route.points[0]
    if s >= cum[-1]:
        return route.points[-1]
    k = bisect.bisect_right(cum, s) - 1
    seg = cum[k + 1] - cum[k]
    return interpolate_great_circle(route.points[k], route.points[k + 1], (s - cum[k]) / seg)


def inject_spoof(scenario: SpoofScenario, earth: EarthModel = DEFAULT_EARTH) -> list[GnssFix]:
    """Replace positions from the onset on with points walked along the spoof route.

    The walk advances by each true step length, starting at the route's first
    point; once the route is exhausted the remaining fixes sit on its last point.
    Times and speeds are untouched.
    """
    truth = list(scenario.truth)
    onset = scenario.onset_index
    route = scenario.spoof_route
    cum = _route_arclength(route, earth)
    if onset < len(truth) - 1:
        first_step = haversine_distance(truth[onset].pos, truth[onset + 1].pos, earth)
        if cum[-1] < first_step:
            raise InvalidInputError(
                f"spoof route is {cum[-1]:.3f} m long, shorter than one step ({first_step:.3f} m)"
            )
    out = truth[:onset]
    s = 0.0
    for k in range(onset, len(truth)):
        if k > onset:
            s += haversine_distance(truth[k - 1].pos, truth[k].pos, earth)
        out.append(replace(truth[k], pos=point_at_arclength(route, s, cum, earth)))
    return out


def _heading_en(truth: Sequence[GnssFix], k: int) -> tuple[float, float]:
    """Unit east/north direction of travel at fix ``k`` from its neighbors."""
    lo, hi = max(k - 1, 0), min(k + 1, len(truth) - 1)
    a, b = truth[lo].pos, truth[hi].pos
    de = math.radians(b.lon_deg - a.lon_deg) * math.cos(math.radians((a.lat_deg + b.lat_deg) / 2))
    dn = math.radians(b.lat_deg - a.lat_deg)
    norm = math.hypot(de, dn)
    if norm == 0.0:
        raise InvalidInputError(f"degenerate heading at fix {k}: vehicle is stationary")
    return de / norm, dn / norm


def synth_deviation(truth: Sequence[GnssFix], onset_index: int, cross_track_rate: float,
                    earth: EarthModel = DEFAULT_EARTH) -> list[GnssFix]:
    """Shift fix ``onset + k`` right of the local heading by ``k * cross_track_rate`` meters."""
    truth = list(truth)
    if not 0 < onset_index < len(truth):
        raise InvalidInputError(
            f"onset_index must satisfy 0 < onset < {len(truth)}, got {onset_index}"
        )
    if not (math.isfinite(cross_track_rate) and cross_track_rate > 0):
        raise InvalidInputError(f"cross_track_rate must be positive, got {cross_track_rate}")
    if all(f.pos == truth[0].pos for f in truth):
        raise InvalidInputError("degenerate heading: vehicle is stationary")
    m_per_rad = earth.radius_m
    out = truth[:onset_index]
    for k in range(onset_index, len(truth)):
        offset = (k - onset_index) * cross_track_rate
        fix = truth[k]
        if offset == 0.0:
            out.append(fix)
            continue
        ue, un = _heading_en(truth, k)
        # right-hand normal of (east, north) heading
        de, dn = un * offset, -ue * offset
        lat = fix.pos.lat_deg + math.degrees(dn / m_per_rad)
        lon = fix.pos.lon_deg + math.degrees(de / (m_per_rad * math.cos(fix.pos.lat_rad)))
        out.append(replace(fix, pos=GeoPoint(lat, lon)))
    return out

