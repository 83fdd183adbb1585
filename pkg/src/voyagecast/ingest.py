"""AIS ingestion: CSV parsing, track building, cleaning, resampling, splits.

A voyage becomes one or more *tracks*: time-ordered position sequences cut at
large time/distance gaps, scrubbed of port loitering and degenerate geometry,
resampled onto a strict 10-minute grid, split at hard turns, reversed for
augmentation, and finally partitioned into train/val/test by vessel.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .geo import (
    GRAD_PER_DEG,
    GeoPoint,
    bearing_deg,
    delta_bearing,
    haversine_km,
    speed_knots,
)
from .hexgrid import HexGrid

CSV_HEADER = ["mmsi", "timestamp_iso8601", "lat", "lon", "sog_knots", "cog_deg", "vessel_type"]
STEP_SECONDS = 600  # resampling interval
STEP_HOURS = STEP_SECONDS / 3600.0
VESSEL_TYPES = ("cargo", "tanker", "other")


@dataclass(frozen=True)
class AisMessage:
    mmsi: int
    timestamp: int  # UTC epoch seconds
    lat: float
    lon: float
    sog: float | None = None
    cog: float | None = None
    vessel_type: str = "other"


@dataclass
class Track:
    """One cleaned voyage segment of a single vessel.

    Position arrays run in lockstep with ``times``; kinematics arrays are
    populated by :func:`compute_kinematics` (bearings in gradians).
    """

    mmsi: int
    vessel_type: str
    track_id: int
    times: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    v: np.ndarray | None = None
    dv: np.ndarray | None = None
    theta: np.ndarray | None = None
    dtheta: np.ndarray | None = None
    stratum: tuple[int, int] | None = None
    weight: float = 1.0
    split: str = ""
    is_reversed: bool = False

    def __len__(self) -> int:
        return len(self.times)

    def point(self, i: int) -> GeoPoint:
        return GeoPoint(float(self.lats[i]), float(self.lons[i]))


@dataclass
class ParseReport:
    messages: list[AisMessage] = field(default_factory=list)
    skipped: int = 0


def parse_csv(path) -> ParseReport:
    """Parse the AIS CSV schema, counting and skipping malformed rows."""
    report = ParseReport()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return report
        if [h.strip() for h in header] != CSV_HEADER:
            raise ValueError(f"malformed header {header!r}, expected {CSV_HEADER}")
        for row in reader:
            msg = _parse_row(row)
            if msg is None:
                report.skipped += 1
            else:
                report.messages.append(msg)
    return report


def _parse_row(row: list[str]) -> AisMessage | None:
    if len(row) != len(CSV_HEADER):
        return None
    try:
        mmsi = int(row[0])
        ts = _parse_time(row[1])
        lat = float(row[2])
        lon = float(row[3])
        sog = float(row[4]) if row[4].strip() else None
        cog = float(row[5]) if row[5].strip() else None
    except (ValueError, OverflowError):
        return None
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        return None
    vtype = row[6].strip().lower()
    if vtype not in VESSEL_TYPES:
        vtype = "other"
    return AisMessage(mmsi, ts, lat, lon, sog, cog, vtype)


def _parse_time(text: str) -> int:
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_time(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def load_ports(path) -> list[GeoPoint]:
    ports = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ports.append(GeoPoint(float(row["lat"]), float(row["lon"])))
    return ports


# -- Step 1-2: segmentation ---------------------------------------------------


def segment(messages: list[AisMessage], gap_hours: float = 8.0, gap_km: float = 50.0) -> list[Track]:
    """Cut per-vessel message streams into tracks at time or distance gaps."""
    by_mmsi: dict[int, list[AisMessage]] = {}
    for m in messages:
        by_mmsi.setdefault(m.mmsi, []).append(m)

    tracks: list[Track] = []
    next_id = 0
    for mmsi in sorted(by_mmsi):
        msgs = sorted(by_mmsi[mmsi], key=lambda m: m.timestamp)
        runs: list[list[AisMessage]] = [[msgs[0]]]
        for prev, cur in zip(msgs, msgs[1:]):
            dt_h = (cur.timestamp - prev.timestamp) / 3600.0
            d_km = haversine_km(
                GeoPoint(prev.lat, prev.lon), GeoPoint(cur.lat, cur.lon)
            )
            if dt_h > gap_hours or d_km > gap_km:
                runs.append([])
            runs[-1].append(cur)
        for run in runs:
            tracks.append(_track_from_messages(run, next_id))
            next_id += 1
    return tracks


def _track_from_messages(msgs: list[AisMessage], track_id: int) -> Track:
    vtype = msgs[0].vessel_type
    return Track(
        mmsi=msgs[0].mmsi,
        vessel_type=vtype,
        track_id=track_id,
        times=np.array([m.timestamp for m in msgs], dtype=np.int64),
        lats=np.array([m.lat for m in msgs], dtype=np.float64),
        lons=np.array([m.lon for m in msgs], dtype=np.float64),
    )


# -- Step 3: cleaning ---------------------------------------------------------


@dataclass
class CleanReport:
    tracks: list[Track] = field(default_factory=list)
    dropped_port_points: int = 0
    dropped_self_intersecting: int = 0
    dropped_same_port: int = 0
    dropped_short: int = 0
    dropped_outside_grid: int = 0
    dropped_rare_stratum: int = 0


def clean(
    tracks: list[Track],
    grid: HexGrid,
    ports: list[GeoPoint] | None = None,
    port_radius_km: float = 1.0,
    same_port_radius_km: float = 10.0,
    min_pattern_count: int = 5,
) -> CleanReport:
    """Scrub port loitering, degenerate geometry, and rare movement patterns.

    Tracks whose start/end pattern population is <= ``min_pattern_count`` are
    treated as outliers and removed. With no port registry, "same start and
    end port" degrades to start/end grid-cell equality.
    """
    report = CleanReport()
    survivors: list[Track] = []
    for track in tracks:
        if ports:
            keep = _far_from_ports(track, ports, port_radius_km)
            report.dropped_port_points += int(len(track) - keep.sum())
            if keep.sum() < 2:
                report.dropped_short += 1
                continue
            track = replace(
                track,
                times=track.times[keep],
                lats=track.lats[keep],
                lons=track.lons[keep],
            )
        elif len(track) < 2:
            report.dropped_short += 1
            continue
        if _self_intersects(track.lats, track.lons):
            report.dropped_self_intersecting += 1
            continue
        if _same_endpoints(track, grid, ports, same_port_radius_km):
            report.dropped_same_port += 1
            continue
        survivors.append(track)

    survivors = assign_strata(survivors, grid, report)
    counts: dict[tuple[int, int], int] = {}
    for track in survivors:
        counts[track.stratum] = counts.get(track.stratum, 0) + 1
    for track in survivors:
        if counts[track.stratum] <= min_pattern_count:
            report.dropped_rare_stratum += 1
        else:
            report.tracks.append(track)
    return report


def _far_from_ports(track: Track, ports: list[GeoPoint], radius_km: float) -> np.ndarray:
    keep = np.ones(len(track), dtype=bool)
    for port in ports:
        for i in range(len(track)):
            if keep[i] and haversine_km(track.point(i), port) < radius_km:
                keep[i] = False
    return keep


def _same_endpoints(
    track: Track, grid: HexGrid, ports: list[GeoPoint] | None, radius_km: float
) -> bool:
    if ports:
        start = _nearest_port(track.point(0), ports, radius_km)
        end = _nearest_port(track.point(len(track) - 1), ports, radius_km)
        if start is not None or end is not None:
            return start is not None and start == end
    a = grid.locate(track.point(0))
    b = grid.locate(track.point(len(track) - 1))
    return a is not None and a == b


def _nearest_port(p: GeoPoint, ports: list[GeoPoint], radius_km: float) -> int | None:
    best, best_d = None, radius_km
    for i, port in enumerate(ports):
        d = haversine_km(p, port)
        if d < best_d:
            best, best_d = i, d
    return best


def _self_intersects(lats: np.ndarray, lons: np.ndarray) -> bool:
    """Pairwise proper-intersection test over non-adjacent polyline segments."""
    n = len(lats) - 1
    if n < 3:
        return False
    x1, y1 = lons[:-1], lats[:-1]
    x2, y2 = lons[1:], lats[1:]
    for i in range(n - 2):
        js = np.arange(i + 2, n)
        d1 = _cross(x2[i] - x1[i], y2[i] - y1[i], x1[js] - x1[i], y1[js] - y1[i])
        d2 = _cross(x2[i] - x1[i], y2[i] - y1[i], x2[js] - x1[i], y2[js] - y1[i])
        d3 = _cross(x2[js] - x1[js], y2[js] - y1[js], x1[i] - x1[js], y1[i] - y1[js])
        d4 = _cross(x2[js] - x1[js], y2[js] - y1[js], x2[i] - x1[js], y2[i] - y1[js])
        hit = (d1 * d2 < 0) & (d3 * d4 < 0)
        if hit.any():
            return True
    return False


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


# -- Step 3: 10-minute resampling --------------------------------------------


def interpolate_10min(track: Track) -> Track:
    """Resample positions onto a 10-minute grid anchored at the first fix."""
    if len(track) < 2:
        raise ValueError(f"track {track.track_id}: need >= 2 points to interpolate")
    t0 = int(track.times[0])
    t_end = int(track.times[-1])
    n_steps = (t_end - t0) // STEP_SECONDS
    if n_steps < 1:
        raise ValueError(f"track {track.track_id}: shorter than one resample step")
    new_times = t0 + STEP_SECONDS * np.arange(n_steps + 1, dtype=np.int64)
    lats = np.interp(new_times, track.times, track.lats)
    lons = np.interp(new_times, track.times, track.lons)
    return replace(track, times=new_times, lats=lats, lons=lons, v=None, dv=None, theta=None, dtheta=None)


# -- Step 4: kinematics and turn splitting -------------------------------------


def compute_kinematics(track: Track) -> Track:
    """Derive speed, acceleration, bearing (gradians) and bearing rate.

    Leg i (from fix i-1 to fix i) defines v[i] and theta[i]; the first fix
    copies the first leg so constant-velocity tracks stay constant.
    """
    n = len(track)
    if n < 2:
        raise ValueError("kinematics need >= 2 points")
    dt_h = np.diff(track.times) / 3600.0
    v = np.zeros(n)
    theta_deg = np.zeros(n)
    prev_bearing = 0.0
    for i in range(1, n):
        a, b = track.point(i - 1), track.point(i)
        v[i] = speed_knots(a, b, float(dt_h[i - 1]))
        if a.lat == b.lat and a.lon == b.lon:
            theta_deg[i] = prev_bearing  # stationary leg keeps heading
        else:
            theta_deg[i] = bearing_deg(a, b)
            prev_bearing = theta_deg[i]
    v[0] = v[1]
    theta_deg[0] = theta_deg[1]

    dv = np.zeros(n)
    dtheta_g = np.zeros(n)
    for i in range(1, n):
        dv[i] = (v[i] - v[i - 1]) / float(dt_h[i - 1])
        dtheta_g[i] = delta_bearing(theta_deg[i - 1], theta_deg[i]) * GRAD_PER_DEG
    theta_g = (theta_deg * GRAD_PER_DEG) % 400.0
    return replace(track, v=v, dv=dv, theta=theta_g, dtheta=dtheta_g)


def split_on_turn(track: Track, limit_gradian: float = 45.0) -> list[Track]:
    """Cut a track between consecutive fixes whose bearing change exceeds the limit."""
    if track.dtheta is None:
        track = compute_kinematics(track)
    cuts = [0]
    for i in range(1, len(track)):
        if abs(track.dtheta[i]) > limit_gradian:
            cuts.append(i)
    cuts.append(len(track))
    pieces: list[Track] = []
    for a, b in zip(cuts, cuts[1:]):
        if b - a >= 2:
            piece = Track(
                mmsi=track.mmsi,
                vessel_type=track.vessel_type,
                track_id=track.track_id,
                times=track.times[a:b].copy(),
                lats=track.lats[a:b].copy(),
                lons=track.lons[a:b].copy(),
            )
            pieces.append(compute_kinematics(piece))
    return pieces


# -- Step 3 end: reversal augmentation -----------------------------------------


def augment_reverse(tracks: list[Track]) -> list[Track]:
    """Append a time-reversed copy of each track with recomputed kinematics."""
    out = list(tracks)
    next_id = max((t.track_id for t in tracks), default=-1) + 1
    for track in tracks:
        t0 = int(track.times[0])
        spacing = np.diff(track.times)[::-1]
        times = np.concatenate(([t0], t0 + np.cumsum(spacing))).astype(np.int64)
        rev = Track(
            mmsi=track.mmsi,
            vessel_type=track.vessel_type,
            track_id=next_id,
            times=times,
            lats=track.lats[::-1].copy(),
            lons=track.lons[::-1].copy(),
            is_reversed=True,
        )
        out.append(compute_kinematics(rev))
        next_id += 1
    return out


# -- Step 2/T: strata, weights, and vessel-level splits -------------------------


def assign_strata(
    tracks: list[Track], grid: HexGrid, report: CleanReport | None = None
) -> list[Track]:
    """Attach (start_cell, end_cell) strata; drop tracks leaving the grid."""
    kept = []
    for track in tracks:
        a = grid.locate(track.point(0))
        b = grid.locate(track.point(len(track) - 1))
        if a is None or b is None:
            if report is not None:
                report.dropped_outside_grid += 1
            continue
        track.stratum = (a, b)
        kept.append(track)
    return kept


def attach_weights(tracks: list[Track]) -> None:
    """Inverse-density stratum weights, normalized so weights sum to len(tracks)."""
    counts: dict[tuple[int, int], int] = {}
    for t in tracks:
        counts[t.stratum] = counts.get(t.stratum, 0) + 1
    n = len(tracks)
    s = len(counts)
    for t in tracks:
        t.weight = n / (s * counts[t.stratum])


def stratify_and_split(
    tracks: list[Track],
    test: float = 0.20,
    val_of_rest: float = 0.20,
    seed: int = 0,
) -> dict[str, list[Track]]:
    """Partition tracks into train/val/test by vessel, stratified by pattern.

    Every vessel lands in exactly one split; within each stratum the test
    fraction of vessels is held out first, then the validation fraction of
    the remainder.
    """
    if not tracks:
        raise ValueError("empty corpus")
    attach_weights(tracks)

    by_vessel: dict[int, list[Track]] = {}
    for t in tracks:
        by_vessel.setdefault(t.mmsi, []).append(t)

    # a vessel belongs to its most common stratum (ties: smallest stratum key)
    vessel_stratum: dict[int, tuple[int, int]] = {}
    for mmsi, ts in by_vessel.items():
        counts: dict[tuple[int, int], int] = {}
        for t in ts:
            counts[t.stratum] = counts.get(t.stratum, 0) + 1
        vessel_stratum[mmsi] = min(counts, key=lambda s: (-counts[s], s))

    strata: dict[tuple[int, int], list[int]] = {}
    for mmsi in sorted(by_vessel):
        strata.setdefault(vessel_stratum[mmsi], []).append(mmsi)

    rng = np.random.default_rng(seed)
    assignment: dict[int, str] = {}
    for stratum in sorted(strata):
        vessels = sorted(strata[stratum])
        order = rng.permutation(len(vessels))
        n_test = int(len(vessels) * test + 0.5)
        n_val = int((len(vessels) - n_test) * val_of_rest + 0.5)
        for rank, idx in enumerate(order):
            if rank < n_test:
                split = "test"
            elif rank < n_test + n_val:
                split = "val"
            else:
                split = "train"
            assignment[vessels[idx]] = split

    out: dict[str, list[Track]] = {"train": [], "val": [], "test": []}
    for t in sorted(tracks, key=lambda t: (t.mmsi, int(t.times[0]), t.track_id)):
        t.split = assignment[t.mmsi]
        out[t.split].append(t)
    return out


# -- export ---------------------------------------------------------------------


def tracks_to_csv(tracks: list[Track], path) -> None:
    """Re-export curated tracks in the input schema plus a track_id column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER + ["track_id"])
        for t in tracks:
            for i in range(len(t)):
                sog = "" if t.v is None else f"{t.v[i]:.6f}"
                cog = "" if t.theta is None else f"{t.theta[i] / GRAD_PER_DEG:.6f}"
                writer.writerow(
                    [
                        t.mmsi,
                        format_time(int(t.times[i])),
                        f"{t.lats[i]:.8f}",
                        f"{t.lons[i]:.8f}",
                        sog,
                        cog,
                        t.vessel_type,
                        t.track_id,
                    ]
                )
