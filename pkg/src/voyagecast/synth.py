"""Deterministic synthetic vessel traffic over a lane graph.

Vessels follow waypoint lanes at cargo/tanker service speeds with smooth
(AR(1)) cross-track noise, emitting one fix every ten minutes. Every track
carries ground-truth labels: the route polygon its lane crosses and the grid
cell containing its final fix.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geo import EARTH_RADIUS_KM, GeoPoint, haversine_km
from .hexgrid import HexGrid, RoutePolygon
from .ingest import AisMessage, format_time

KM_PER_DEG_LAT = EARTH_RADIUS_KM * math.pi / 180.0
MMSI_BASE = 100_000_000
START_EPOCH = 1_559_347_200  # 2019-06-01T00:00:00Z
SPEED_RANGE_KN = (10.0, 18.0)
_AR1_RHO = 0.9


@dataclass(frozen=True)
class Lane:
    waypoints: tuple[tuple[float, float], ...]  # (lat, lon)
    route_id: int
    probability: float


@dataclass
class LaneWorld:
    seed: int
    bbox: tuple[float, float, float, float]
    cell_size_deg: float
    routes: list[RoutePolygon]
    lanes: list[Lane]
    vessel_count: int
    cross_track_sigma_km: float = 1.0
    speed_sigma_kn: float = 0.5
    _grid: HexGrid | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        total = sum(lane.probability for lane in self.lanes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"lane probabilities sum to {total}, expected 1")
        grid = self.grid()
        for lane in self.lanes:
            for lat, lon in (lane.waypoints[0], lane.waypoints[-1]):
                if grid.locate(GeoPoint(lat, lon)) is None:
                    raise ValueError(f"lane endpoint ({lat}, {lon}) outside the grid")

    def grid(self) -> HexGrid:
        if self._grid is None:
            self._grid = HexGrid(self.bbox, self.cell_size_deg)
        return self._grid


@dataclass(frozen=True)
class TrackLabel:
    track_id: int
    mmsi: int
    route_id: int
    dest_cell: int


def fork_world(
    seed: int = 0,
    vessel_count: int = 3000,
    cross_track_sigma_km: float = 1.0,
    speed_sigma_kn: float = 0.5,
    bbox: tuple[float, float, float, float] = (44.0, 48.0, -63.0, -55.5),
    cell_size_deg: float = 0.3,
) -> LaneWorld:
    """Canonical two-branch world: shared approach, then a 2:1 route fork.

    Both branches reach the same far corner, one through each route polygon,
    so route identity is decided mid-voyage rather than by the endpoints.
    """
    a = (44.5, -62.4)
    b = (45.3, -60.6)
    c = (47.2, -56.4)
    # waypoint turns stay under the 45-gradian split threshold with noise headroom
    north = Lane(waypoints=(a, b, (46.3, -59.2), c), route_id=0, probability=2.0 / 3.0)
    south = Lane(waypoints=(a, b, (45.4, -58.8), (46.1, -57.4), c), route_id=1, probability=1.0 / 3.0)
    routes = [
        RoutePolygon(0, ((46.0, -59.6), (46.0, -58.8), (46.6, -58.8), (46.6, -59.6))),
        RoutePolygon(1, ((45.15, -59.2), (45.15, -58.4), (45.65, -58.4), (45.65, -59.2))),
    ]
    return LaneWorld(
        seed=seed,
        bbox=bbox,
        cell_size_deg=cell_size_deg,
        routes=routes,
        lanes=[north, south],
        vessel_count=vessel_count,
        cross_track_sigma_km=cross_track_sigma_km,
        speed_sigma_kn=speed_sigma_kn,
    )


def generate(world: LaneWorld) -> tuple[list[AisMessage], list[TrackLabel]]:
    """Seeded corpus of AIS messages plus per-track ground truth."""
    grid = world.grid()
    lane_p = [lane.probability for lane in world.lanes]
    seeds = np.random.SeedSequence(world.seed).spawn(world.vessel_count)
    messages: list[AisMessage] = []
    labels: list[TrackLabel] = []
    for k in range(world.vessel_count):
        rng = np.random.default_rng(seeds[k])
        lane = world.lanes[int(rng.choice(len(world.lanes), p=lane_p))]
        speed = float(rng.uniform(*SPEED_RANGE_KN))
        speed = max(6.0, speed + float(rng.normal(0.0, world.speed_sigma_kn)))
        mmsi = MMSI_BASE + k
        vtype = "cargo" if k % 2 == 0 else "tanker"
        t0 = START_EPOCH + k * 3600
        lats, lons = _sample_lane(lane, speed, world.cross_track_sigma_km, rng)
        for i in range(len(lats)):
            cog = _cog(lats, lons, i)
            messages.append(
                AisMessage(
                    mmsi=mmsi,
                    timestamp=t0 + 600 * i,
                    lat=float(lats[i]),
                    lon=float(lons[i]),
                    sog=speed,
                    cog=cog,
                    vessel_type=vtype,
                )
            )
        dest = grid.locate(GeoPoint(float(lats[-1]), float(lons[-1])))
        labels.append(TrackLabel(track_id=k, mmsi=mmsi, route_id=lane.route_id, dest_cell=int(dest)))
    return messages, labels


def _sample_lane(
    lane: Lane, speed_kn: float, sigma_km: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    wp = np.array(lane.waypoints, dtype=np.float64)  # (m, 2) lat/lon
    seg_km = np.array(
        [
            haversine_km(GeoPoint(*wp[i]), GeoPoint(*wp[i + 1]))
            for i in range(len(wp) - 1)
        ]
    )
    cum = np.concatenate(([0.0], np.cumsum(seg_km)))
    step_km = speed_kn * 1.852 * (600.0 / 3600.0)
    n = int(cum[-1] // step_km) + 1
    s = step_km * np.arange(n)
    lats = np.interp(s, cum, wp[:, 0])
    lons = np.interp(s, cum, wp[:, 1])
    if sigma_km > 0.0:
        offsets = np.zeros(n)
        innovation = sigma_km * math.sqrt(1.0 - _AR1_RHO**2)
        offsets[0] = rng.normal(0.0, sigma_km)
        for i in range(1, n):
            offsets[i] = _AR1_RHO * offsets[i - 1] + rng.normal(0.0, innovation)
        # unit normal to the local track direction, in km space
        dlat = np.gradient(lats) * KM_PER_DEG_LAT
        dlon = np.gradient(lons) * KM_PER_DEG_LAT * np.cos(np.radians(lats))
        norm = np.hypot(dlat, dlon)
        norm[norm == 0.0] = 1.0
        nx = -dlat / norm  # east component of the left normal
        ny = dlon / norm  # north component
        lats = lats + offsets * ny / KM_PER_DEG_LAT
        lons = lons + offsets * nx / (KM_PER_DEG_LAT * np.cos(np.radians(lats)))
    return lats, lons


def _cog(lats: np.ndarray, lons: np.ndarray, i: int) -> float:
    from .geo import bearing_deg

    j = i + 1 if i + 1 < len(lats) else i - 1
    a = GeoPoint(float(lats[min(i, j)]), float(lons[min(i, j)]))
    b = GeoPoint(float(lats[max(i, j)]), float(lons[max(i, j)]))
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0
    return bearing_deg(a, b)


def write_messages_csv(messages: list[AisMessage], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mmsi", "timestamp_iso8601", "lat", "lon", "sog_knots", "cog_deg", "vessel_type"])
        for m in messages:
            writer.writerow(
                [
                    m.mmsi,
                    format_time(m.timestamp),
                    f"{m.lat:.8f}",
                    f"{m.lon:.8f}",
                    f"{m.sog:.4f}" if m.sog is not None else "",
                    f"{m.cog:.4f}" if m.cog is not None else "",
                    m.vessel_type,
                ]
            )


def write_labels_csv(labels: list[TrackLabel], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["track_id", "route_id", "dest_cell"])
        for lb in labels:
            writer.writerow([lb.track_id, lb.route_id, lb.dest_cell])


def load_labels_csv(path) -> list[TrackLabel]:
    labels = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            tid = int(row["track_id"])
            labels.append(
                TrackLabel(
                    track_id=tid,
                    mmsi=MMSI_BASE + tid,
                    route_id=int(row["route_id"]),
                    dest_cell=int(row["dest_cell"]),
                )
            )
    return labels
