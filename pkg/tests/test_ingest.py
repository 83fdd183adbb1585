"""Track building pipeline: segmentation, cleaning, resampling, splits."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voyagecast.geo import GeoPoint, haversine_km
from voyagecast.hexgrid import HexGrid
from voyagecast.ingest import (
    AisMessage,
    Track,
    augment_reverse,
    clean,
    compute_kinematics,
    interpolate_10min,
    parse_csv,
    segment,
    split_on_turn,
    stratify_and_split,
    tracks_to_csv,
)

BBOX = (43.0, 48.0, -64.0, -57.0)


def msgs_along(mmsi, t0, positions, step_s=600, vtype="cargo"):
    return [
        AisMessage(mmsi, t0 + i * step_s, lat, lon, vessel_type=vtype)
        for i, (lat, lon) in enumerate(positions)
    ]


def straight_positions(n, lat0=45.0, lon0=-62.0, dlat=0.0, dlon=0.02):
    return [(lat0 + i * dlat, lon0 + i * dlon) for i in range(n)]


@pytest.fixture(scope="module")
def grid():
    return HexGrid(BBOX, 0.3)


# -- parsing -------------------------------------------------------------------


def test_parse_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("mmsi,timestamp_iso8601,lat,lon,sog_knots,cog_deg,vessel_type\n")
    report = parse_csv(p)
    assert report.messages == [] and report.skipped == 0


def test_parse_skips_bad_latitude(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(
        "mmsi,timestamp_iso8601,lat,lon,sog_knots,cog_deg,vessel_type\n"
        "123,2019-06-01T00:00:00Z,91.0,-61.0,10.0,90.0,cargo\n"
        "123,2019-06-01T00:10:00Z,45.0,-61.0,10.0,90.0,cargo\n"
    )
    report = parse_csv(p)
    assert report.skipped == 1
    assert len(report.messages) == 1


def test_parse_three_row_fixture(tmp_path):
    p = tmp_path / "three.csv"
    p.write_text(
        "mmsi,timestamp_iso8601,lat,lon,sog_knots,cog_deg,vessel_type\n"
        "100,2019-06-01T00:00:00Z,45.0,-61.0,10.5,90.0,cargo\n"
        "100,2019-06-01T00:10:00Z,45.0,-60.9,,,tanker\n"
        "200,2019-06-01T00:00:00+00:00,46.0,-60.0,8.0,180.0,trawler\n"
    )
    report = parse_csv(p)
    assert report.skipped == 0
    m0, m1, m2 = report.messages
    assert (m0.mmsi, m0.lat, m0.lon, m0.sog, m0.cog) == (100, 45.0, -61.0, 10.5, 90.0)
    assert m1.timestamp - m0.timestamp == 600 and m1.sog is None
    assert m2.vessel_type == "other"  # unknown types degrade to other


def test_parse_rejects_malformed_header(tmp_path):
    p = tmp_path / "hdr.csv"
    p.write_text("a,b,c\n")
    with pytest.raises(ValueError, match="malformed header"):
        parse_csv(p)


# -- segmentation ----------------------------------------------------------------


def test_segment_no_gaps_single_track():
    msgs = msgs_along(1, 0, straight_positions(10))
    assert len(segment(msgs)) == 1


def test_segment_time_gap():
    msgs = msgs_along(1, 0, straight_positions(5))
    late = msgs_along(1, msgs[-1].timestamp + int(9 * 3600), straight_positions(5, lat0=45.2))
    tracks = segment(msgs + late)
    assert len(tracks) == 2


def test_segment_distance_gap():
    msgs = msgs_along(1, 0, straight_positions(5), step_s=3600)
    # ~60 km jump northwards in one hour
    jump_lat = 45.0 + 60.0 / 111.19
    late = msgs_along(1, msgs[-1].timestamp + 3600, straight_positions(5, lat0=jump_lat))
    tracks = segment(msgs + late)
    assert len(tracks) == 2


def test_segment_idempotent():
    msgs = msgs_along(1, 0, straight_positions(6))
    late = msgs_along(1, msgs[-1].timestamp + int(9 * 3600), straight_positions(6, lat0=45.4))
    tracks = segment(msgs + late)
    again = []
    for t in tracks:
        remsgs = [
            AisMessage(t.mmsi, int(ts), float(la), float(lo), vessel_type=t.vessel_type)
            for ts, la, lo in zip(t.times, t.lats, t.lons)
        ]
        again.extend(segment(remsgs))
    assert len(again) == len(tracks)
    for a, b in zip(tracks, again):
        assert np.array_equal(a.times, b.times)


# -- cleaning --------------------------------------------------------------------


def test_clean_removes_self_intersecting(grid):
    loop = [(45.0, -62.0), (45.0, -61.5), (45.2, -61.75), (44.9, -61.75), (44.9, -61.6)]
    msgs = msgs_along(1, 0, loop, step_s=3600)
    tracks = segment(msgs)
    assert len(tracks) == 1
    report = clean(tracks, grid)
    assert report.dropped_self_intersecting == 1
    assert report.tracks == []


def test_clean_keeps_straight_track(grid):
    msgs = msgs_along(1, 0, straight_positions(40))
    others = [
        msgs_along(10 + k, 0, straight_positions(40, lat0=45.01 + 0.001 * k)) for k in range(6)
    ]
    tracks = segment(msgs + [m for ms in others for m in ms])
    report = clean(tracks, grid)
    assert len(report.tracks) == 7  # pattern population 7 > 5


def test_clean_port_scrub(grid):
    positions = straight_positions(40)
    port = GeoPoint(*positions[0])
    msgs = msgs_along(1, 0, positions)
    tracks = segment(msgs)
    report = clean(tracks, grid, ports=[port], min_pattern_count=0)
    assert report.dropped_port_points >= 1
    for t in report.tracks:
        for i in range(len(t)):
            assert haversine_km(t.point(i), port) >= 1.0


def test_clean_same_cell_endpoints_dropped(grid):
    # out-and-back with distinct geometry but same start/end cell
    out = straight_positions(10, lat0=45.0, lon0=-62.0, dlon=0.01)
    back = [(lat + 0.005, lon) for lat, lon in reversed(out)]
    msgs = msgs_along(1, 0, out + back)
    tracks = segment(msgs)
    report = clean(tracks, grid, min_pattern_count=0)
    assert report.dropped_same_port == 1 or report.dropped_self_intersecting == 1


def test_clean_rare_stratum_removed(grid):
    # five vessels share one pattern, seven another: the 5-member stratum goes
    lane_a = [
        msgs_along(k, 0, straight_positions(40, lat0=44.2 + 0.002 * k)) for k in range(5)
    ]
    lane_b = [
        msgs_along(100 + k, 0, straight_positions(40, lat0=46.5 + 0.002 * k, lon0=-63.0))
        for k in range(7)
    ]
    tracks = segment([m for ms in lane_a + lane_b for m in ms])
    report = clean(tracks, grid)
    assert report.dropped_rare_stratum == 5
    assert len(report.tracks) == 7


# -- interpolation ----------------------------------------------------------------


def test_interpolate_already_spaced_unchanged():
    msgs = msgs_along(1, 0, straight_positions(8))
    t = interpolate_10min(segment(msgs)[0])
    assert np.allclose(t.lons, [p[1] for p in straight_positions(8)])
    assert np.array_equal(np.diff(t.times), np.full(7, 600))


def test_interpolate_linear_thirds():
    track = Track(
        1,
        "cargo",
        0,
        np.array([0, 1800], dtype=np.int64),
        np.array([45.0, 45.3]),
        np.array([-62.0, -61.4]),
    )
    t = interpolate_10min(track)
    assert len(t) == 4
    assert t.lats == pytest.approx([45.0, 45.1, 45.2, 45.3])
    assert t.lons == pytest.approx([-62.0, -61.8, -61.6, -61.4])


def test_interpolate_irregular_matches_oracle():
    rng = np.random.default_rng(5)
    times = np.cumsum(rng.choice([420, 780], size=20)).astype(np.int64)
    lats = 45.0 + np.cumsum(rng.uniform(0.001, 0.02, 20))
    lons = -62.0 + np.cumsum(rng.uniform(0.001, 0.02, 20))
    track = Track(1, "cargo", 0, times, lats, lons)
    got = interpolate_10min(track)
    new_times = np.arange(times[0], times[-1] + 1, 600)
    assert np.array_equal(got.times, new_times)
    for nt, lat, lon in zip(got.times, got.lats, got.lons):
        j = np.searchsorted(times, nt, side="right") - 1
        j = min(j, len(times) - 2)
        frac = (nt - times[j]) / (times[j + 1] - times[j])
        assert lat == pytest.approx(lats[j] + frac * (lats[j + 1] - lats[j]), abs=1e-9)
        assert lon == pytest.approx(lons[j] + frac * (lons[j + 1] - lons[j]), abs=1e-9)


def test_interpolate_single_point_rejected():
    track = Track(1, "cargo", 0, np.array([0]), np.array([45.0]), np.array([-62.0]))
    with pytest.raises(ValueError):
        interpolate_10min(track)


# -- turn splitting ----------------------------------------------------------------


def test_split_straight_line_intact():
    msgs = msgs_along(1, 0, straight_positions(12))
    t = interpolate_10min(segment(msgs)[0])
    assert len(split_on_turn(t)) == 1


def test_split_single_corner():
    # heading east then north: a 100-gradian turn
    east = straight_positions(6)
    corner_lat, corner_lon = east[-1]
    north = [(corner_lat + 0.02 * i, corner_lon) for i in range(1, 7)]
    msgs = msgs_along(1, 0, east + north)
    t = interpolate_10min(segment(msgs)[0])
    pieces = split_on_turn(t)
    assert len(pieces) == 2


def test_split_zigzag_three_violations():
    def leg(start, dlat, dlon, n):
        return [(start[0] + dlat * i, start[1] + dlon * i) for i in range(1, n + 1)]

    pts = [(45.0, -62.0)]
    for dlat, dlon in [(0.0, 0.02), (0.02, 0.0), (0.0, 0.02), (0.02, 0.0)]:
        pts += leg(pts[-1], dlat, dlon, 5)
    msgs = msgs_along(1, 0, pts)
    t = interpolate_10min(segment(msgs)[0])
    assert len(split_on_turn(t)) == 4


# -- reversal ---------------------------------------------------------------------


def test_reverse_doubles_and_involutes():
    msgs = msgs_along(1, 0, straight_positions(10))
    tracks = [compute_kinematics(interpolate_10min(t)) for t in segment(msgs)]
    doubled = augment_reverse(tracks)
    assert len(doubled) == 2 * len(tracks)
    rev = doubled[-1]
    assert rev.is_reversed
    assert np.allclose(rev.lats, tracks[0].lats[::-1])
    twice = augment_reverse([rev])[-1]
    assert np.allclose(twice.lats, tracks[0].lats)
    assert np.allclose(twice.lons, tracks[0].lons)


def test_reverse_east_track_bearing_west():
    msgs = msgs_along(1, 0, straight_positions(10, dlat=0.0, dlon=0.02))
    tracks = [compute_kinematics(interpolate_10min(t)) for t in segment(msgs)]
    rev = augment_reverse(tracks)[-1]
    assert tracks[0].theta[3] == pytest.approx(100.0, abs=0.1)  # east
    assert rev.theta[3] == pytest.approx(300.0, abs=0.1)  # west


def test_constant_velocity_deltas_zero():
    msgs = msgs_along(1, 0, straight_positions(10, dlat=0.0, dlon=0.02))
    t = compute_kinematics(interpolate_10min(segment(msgs)[0]))
    assert np.allclose(t.dv, 0.0, atol=1e-6)
    assert np.allclose(t.dtheta, 0.0, atol=1e-6)


# -- splits ------------------------------------------------------------------------


def make_corpus(grid, n_vessels=10):
    tracks = []
    for k in range(n_vessels):
        msgs = msgs_along(1000 + k, 0, straight_positions(30, lat0=45.0 + 0.003 * k))
        for t in segment(msgs):
            t = compute_kinematics(interpolate_10min(t))
            tracks.append(t)
    from voyagecast.ingest import assign_strata

    return assign_strata(tracks, grid)


def test_split_fractions_and_weights(grid):
    tracks = make_corpus(grid, 10)
    splits = stratify_and_split(tracks, seed=3)
    test_vessels = {t.mmsi for t in splits["test"]}
    assert len(test_vessels) == 2
    total = sum(t.weight for ts in splits.values() for t in ts)
    assert total == pytest.approx(len(tracks))


def test_split_disjoint_and_complete(grid):
    tracks = make_corpus(grid, 13)
    splits = stratify_and_split(tracks, seed=9)
    vsets = {name: {t.mmsi for t in ts} for name, ts in splits.items()}
    assert not (vsets["train"] & vsets["test"])
    assert not (vsets["train"] & vsets["val"])
    assert not (vsets["val"] & vsets["test"])
    assert vsets["train"] | vsets["val"] | vsets["test"] == {t.mmsi for t in tracks}


def test_split_deterministic(grid):
    tracks = make_corpus(grid, 12)
    a = stratify_and_split(tracks, seed=5)
    b = stratify_and_split(tracks, seed=5)
    assert [[t.track_id for t in a[k]] for k in ("train", "val", "test")] == [
        [t.track_id for t in b[k]] for k in ("train", "val", "test")
    ]


def test_split_empty_corpus():
    with pytest.raises(ValueError, match="empty corpus"):
        stratify_and_split([])


def test_csv_export_roundtrip(grid, tmp_path):
    tracks = make_corpus(grid, 3)
    out = tmp_path / "tracks.csv"
    tracks_to_csv(tracks, out)
    report = parse_csv_with_track_id(out)
    assert report == sorted({t.track_id for t in tracks})


def parse_csv_with_track_id(path):
    import csv

    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return sorted({int(r["track_id"]) for r in rows})


# -- properties ---------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=40), st.integers(min_value=0, max_value=10_000))
def test_pipeline_spacing_property(n, seed):
    rng = np.random.default_rng(seed)
    lat0 = 44.5 + rng.uniform(0, 1)
    msgs = msgs_along(1, 0, straight_positions(n, lat0=lat0, dlon=0.015))
    for raw in segment(msgs):
        if raw.times[-1] - raw.times[0] < 600:
            continue
        t = interpolate_10min(raw)
        assert len(t) >= 2
        assert np.array_equal(np.diff(t.times), np.full(len(t) - 1, 600))
