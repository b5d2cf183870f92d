import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnss_sentry.errors import FormatError, GnssSentryError, InvalidInputError
from gnss_sentry.geodesy import GeoPoint, destination, haversine_distance
from gnss_sentry.spoofsim import (
    Route,
    SpoofScenario,
    format_kml_route,
    inject_spoof,
    load_route,
    parse_csv_route,
    parse_kml_route,
    point_at_arclength,
    synth_deviation,
)
from gnss_sentry.streams import GnssFix

KML = """<?xml version="1.0" encoding="UTF-8"?>
<kml xmlns="http://www.opengis.net/kml/2.2"><Document><Placemark>
<name>exit</name><LineString><coordinates>
-122.414,37.63443,0 -122.415,37.63500,0
</coordinates></LineString></Placemark></Document></kml>"""


def kml_with(coords: str) -> str:
    return KML.split("<coordinates>")[0] + f"<coordinates>{coords}</coordinates></LineString></Placemark></Document></kml>"


def east_track(n, step=2.7, start=GeoPoint(0.0, 0.0)):
    pts = [start]
    for _ in range(n - 1):
        pts.append(destination(pts[-1], math.pi / 2, step))
    return [GnssFix(0.1 * k, p, 27.0) for k, p in enumerate(pts)]


# ---------------------------------------------------------------- parsing


def test_parse_two_point_route():
    route = parse_kml_route(KML)
    assert len(route) == 2
    assert route.points[0] == GeoPoint(37.63443, -122.414)
    assert route.points[1] == GeoPoint(37.635, -122.415)


def test_parse_bytes_and_no_namespace():
    doc = b"<kml><LineString><coordinates>1,2 3,4,5</coordinates></LineString></kml>"
    assert parse_kml_route(doc).points == (GeoPoint(2, 1), GeoPoint(4, 3))


def test_first_linestring_wins():
    doc = ("<kml><Point><coordinates>9,9</coordinates></Point>"
           "<LineString><coordinates>1,2 3,4</coordinates></LineString>"
           "<LineString><coordinates>5,6 7,8</coordinates></LineString></kml>")
    assert parse_kml_route(doc).points[0] == GeoPoint(2, 1)


def test_empty_coordinates():
    with pytest.raises(FormatError, match="empty"):
        parse_kml_route(kml_with("  "))


def test_missing_block():
    with pytest.raises(FormatError):
        parse_kml_route("<kml><Document/></kml>")


def test_wrong_arity_names_token():
    with pytest.raises(FormatError) as err:
        parse_kml_route(kml_with("-122.414 -122.415,37.635,0"))
    assert err.value.token == 1


def test_unparsable_token_index():
    with pytest.raises(FormatError) as err:
        parse_kml_route(kml_with("1,2 3,4 x,5"))
    assert err.value.token == 3


def test_out_of_range_is_invalid_input():
    with pytest.raises(InvalidInputError):
        parse_kml_route(kml_with("1,95 2,3"))


def test_kml_round_trip():
    route = parse_kml_route(KML)
    assert parse_kml_route(format_kml_route(route)) == route


@settings(max_examples=300)
@given(st.binary(max_size=200))
def test_parser_total_on_bytes(data):
    try:
        parse_kml_route(data)
    except GnssSentryError:
        pass


def test_csv_route(tmp_path):
    path = tmp_path / "route.csv"
    path.write_text("lat_deg,lon_deg\n37.1,-122.1\n37.2,-122.2\n")
    assert load_route(path).points == (GeoPoint(37.1, -122.1), GeoPoint(37.2, -122.2))
    with pytest.raises(FormatError):
        parse_csv_route("lat,lon\n1,2\n")


def test_route_invariants():
    with pytest.raises(InvalidInputError):
        Route((GeoPoint(0, 0),))
    with pytest.raises(InvalidInputError):
        Route((GeoPoint(0, 0), GeoPoint(0, 0)))


# ---------------------------------------------------------------- inject_spoof


def test_onset_at_last_index_replaces_one_fix():
    truth = east_track(6)
    start = destination(truth[-1].pos, 0.0, 10.0)
    route = Route((start, destination(start, 0.0, 50.0)))
    spoofed = inject_spoof(SpoofScenario(tuple(truth), route, len(truth) - 1))
    assert spoofed[:-1] == truth[:-1]
    assert spoofed[-1].pos == start
    assert haversine_distance(truth[-1].pos, spoofed[-1].pos) == pytest.approx(10.0, abs=1e-6)


def test_northbound_route_keeps_true_step_spacing():
    truth = east_track(40)
    onset = 10
    origin = truth[onset].pos
    route = Route((origin, destination(origin, 0.0, 500.0)))
    spoofed = inject_spoof(SpoofScenario(tuple(truth), route, onset))
    for a, b in zip(spoofed[onset:], spoofed[onset + 1:]):
        assert haversine_distance(a.pos, b.pos) == pytest.approx(2.7, abs=1e-6)
    assert spoofed[onset + 1].pos.lat_deg > origin.lat_deg


def test_multi_segment_arclength_isometry():
    truth = east_track(60, step=2.3)
    onset = 5
    p0 = GeoPoint(0.001, 0.0)
    route = Route((p0, destination(p0, 0.3, 40.0), destination(destination(p0, 0.3, 40.0), 1.2, 200.0)))
    spoofed = inject_spoof(SpoofScenario(tuple(truth), route, onset))
    s = 0.0
    for k in range(onset, len(truth)):
        if k > onset:
            s += haversine_distance(truth[k - 1].pos, truth[k].pos)
        assert spoofed[k].pos == point_at_arclength(route, s)
    # within a segment, chord equals arc
    assert haversine_distance(spoofed[onset].pos, spoofed[onset + 1].pos) == pytest.approx(2.3, abs=1e-6)


def test_route_exhaustion_clamps_to_end():
    truth = east_track(20)
    route = Route((GeoPoint(0.0, 0.0), destination(GeoPoint(0.0, 0.0), 0.0, 10.0)))
    spoofed = inject_spoof(SpoofScenario(tuple(truth), route, 2))
    assert spoofed[-1].pos == route.points[-1]


def test_prefix_and_timestamps_preserved():
    truth = east_track(30)
    origin = truth[12].pos
    route = Route((origin, destination(origin, 1.0, 300.0)))
    spoofed = inject_spoof(SpoofScenario(tuple(truth), route, 12))
    assert spoofed[:12] == truth[:12]
    assert [(f.t, f.speed) for f in spoofed] == [(f.t, f.speed) for f in truth]


def test_onset_out_of_range():
    truth = east_track(5)
    route = Route((GeoPoint(0, 0), GeoPoint(0, 1)))
    with pytest.raises(InvalidInputError):
        SpoofScenario(tuple(truth), route, len(truth))
    with pytest.raises(InvalidInputError):
        SpoofScenario(tuple(truth), route, 0)


def test_route_shorter_than_one_step():
    truth = east_track(5)
    route = Route((GeoPoint(0, 0), destination(GeoPoint(0, 0), 0.0, 1.0)))
    with pytest.raises(InvalidInputError, match="shorter"):
        inject_spoof(SpoofScenario(tuple(truth), route, 2))


# ---------------------------------------------------------------- synth_deviation


def test_deviation_one_step_is_rate():
    truth = east_track(20, start=GeoPoint(37.63443, -122.414))
    spoofed = synth_deviation(truth, 5, 3.0)
    assert spoofed[5] == truth[5]
    assert haversine_distance(truth[6].pos, spoofed[6].pos) == pytest.approx(3.0, abs=0.01)
    assert haversine_distance(truth[15].pos, spoofed[15].pos) == pytest.approx(30.0, abs=0.01)


def test_deviation_is_perpendicular_to_the_right():
    truth = east_track(10)
    spoofed = synth_deviation(truth, 2, 3.0)
    # heading east, right-hand side is south
    assert spoofed[4].pos.lat_deg < truth[4].pos.lat_deg
    assert spoofed[4].pos.lon_deg == pytest.approx(truth[4].pos.lon_deg, abs=1e-12)


def test_deviation_prefix_and_time_preserved():
    truth = east_track(10)
    spoofed = synth_deviation(truth, 4, 2.0)
    assert spoofed[:4] == truth[:4]
    assert [(f.t, f.speed) for f in spoofed] == [(f.t, f.speed) for f in truth]


def test_deviation_stationary_rejected():
    p = GeoPoint(37.0, -122.0)
    truth = [GnssFix(0.1 * k, p, 0.0) for k in range(6)]
    with pytest.raises(InvalidInputError, match="stationary"):
        synth_deviation(truth, 2, 3.0)


def test_deviation_rate_must_be_positive():
    with pytest.raises(InvalidInputError):
        synth_deviation(east_track(5), 2, 0.0)
