"""Feature-row assembly, [0,1] normalization, and sliding-window sampling.

Three nested feature sets per fix:

* ``standard``       -- lon, lat, speed, acceleration, bearing, bearing rate
* ``probabilistic``  -- standard plus route / current-cell / destination
                        centroid coordinate pairs
* ``trigonometric``  -- probabilistic with every coordinate pair lifted onto
                        the unit sphere, log-speed, and sin/cos bearing terms

Windows pair a 19-row input block (3 h plus the shared boundary fix at
10-minute spacing) with a 72-row coordinate target (12 h); the input's last
row is the target's first row.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ingest import STEP_HOURS, Track

FEATURE_SETS = ("standard", "probabilistic", "trigonometric")
INPUT_ROWS = 19
TARGET_ROWS = 72
STRIDE_ROWS = 3  # 30 minutes of 10-minute fixes

_GRAD_TO_RAD = math.pi / 200.0


def feature_arity(feature_set: str) -> int:
    return {"standard": 6, "probabilistic": 12, "trigonometric": 30}[feature_set]


def unit_sphere(lat_deg, lon_deg):
    """Project degrees onto the unit sphere: x, y, z with x^2+y^2+z^2 = 1."""
    lat = np.radians(lat_deg)
    lon = np.radians(lon_deg)
    return np.cos(lon) * np.cos(lat), np.sin(lon) * np.cos(lat), np.sin(lat)


def log_speed(v):
    return np.log1p(np.abs(v))


def assemble_features(
    track: Track, feature_set: str, centroid_rows: np.ndarray | None = None
) -> np.ndarray:
    """Raw (unnormalized) feature matrix for one track.

    ``centroid_rows`` is the (n, 6) route/cell/destination centroid block
    and is required for the probabilistic and trigonometric sets.
    """
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {feature_set!r}")
    if track.v is None:
        raise ValueError("track is missing kinematics")
    n = len(track)
    std = np.column_stack([track.lons, track.lats, track.v, track.dv, track.theta, track.dtheta])
    if feature_set == "standard":
        return std
    if centroid_rows is None or centroid_rows.shape != (n, 6):
        raise ValueError("centroid rows required for probabilistic feature sets")
    if feature_set == "probabilistic":
        return np.hstack([std, centroid_rows])

    a, b, g = unit_sphere(track.lats, track.lons)
    vlog = log_speed(track.v)
    dvlog = np.zeros(n)
    dvlog[1:] = vlog[1:] - vlog[:-1]
    th = track.theta * _GRAD_TO_RAD
    dth = track.dtheta * _GRAD_TO_RAD
    blocks = [
        std[:, :2],
        np.column_stack([a, b, g]),
        std[:, 2:6],
        np.column_stack([vlog, dvlog, np.cos(th), np.sin(th), np.cos(dth), np.sin(dth)]),
    ]
    for j in range(3):  # route, current-cell, destination centroid pairs
        pair = centroid_rows[:, 2 * j : 2 * j + 2]
        ca, cb, cg = unit_sphere(pair[:, 1], pair[:, 0])
        blocks.append(pair)
        blocks.append(np.column_stack([ca, cb, cg]))
    return np.hstack(blocks)


class Normalizer:
    """Per-feature affine map onto [0,1] with clamping, plus the inverse."""

    def __init__(self, mins: np.ndarray, maxs: np.ndarray, lat_range, lon_range):
        mins = np.asarray(mins, dtype=np.float64)
        maxs = np.asarray(maxs, dtype=np.float64)
        if (maxs <= mins).any():
            bad = int(np.nonzero(maxs <= mins)[0][0])
            raise ValueError(f"feature {bad}: max must exceed min")
        if lat_range[1] <= lat_range[0] or lon_range[1] <= lon_range[0]:
            raise ValueError("degenerate target coordinate range")
        self.mins = mins
        self.maxs = maxs
        self.lat_range = (float(lat_range[0]), float(lat_range[1]))
        self.lon_range = (float(lon_range[0]), float(lon_range[1]))

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return np.clip((rows - self.mins) / (self.maxs - self.mins), 0.0, 1.0)

    def invert(self, rows: np.ndarray) -> np.ndarray:
        return self.mins + rows * (self.maxs - self.mins)

    def apply_target(self, latlon: np.ndarray) -> np.ndarray:
        out = np.empty_like(latlon)
        out[..., 0] = (latlon[..., 0] - self.lat_range[0]) / (self.lat_range[1] - self.lat_range[0])
        out[..., 1] = (latlon[..., 1] - self.lon_range[0]) / (self.lon_range[1] - self.lon_range[0])
        return np.clip(out, 0.0, 1.0)

    def invert_target(self, norm: np.ndarray) -> np.ndarray:
        out = np.empty_like(norm)
        out[..., 0] = self.lat_range[0] + norm[..., 0] * (self.lat_range[1] - self.lat_range[0])
        out[..., 1] = self.lon_range[0] + norm[..., 1] * (self.lon_range[1] - self.lon_range[0])
        return out

    def to_dict(self) -> dict:
        return {
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "lat_range": list(self.lat_range),
            "lon_range": list(self.lon_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["mins"]), np.array(d["maxs"]), d["lat_range"], d["lon_range"])


def fit_normalizer(
    feature_set: str,
    bbox: tuple[float, float, float, float],
    speed_cap_kn: float = 30.0,
) -> Normalizer:
    """Range-driven normalizer: bbox bounds coordinates, caps bound speed."""
    lat_min, lat_max, lon_min, lon_max = bbox
    lon_r = (lon_min, lon_max)
    lat_r = (lat_min, lat_max)
    dv_cap = speed_cap_kn / STEP_HOURS
    vlog_cap = math.log1p(speed_cap_kn)
    unit = (-1.0, 1.0)
    std = [lon_r, lat_r, (0.0, speed_cap_kn), (-dv_cap, dv_cap), (0.0, 400.0), (-200.0, 200.0)]
    pair = [lon_r, lat_r]
    sphere = [unit, unit, unit]
    if feature_set == "standard":
        ranges = std
    elif feature_set == "probabilistic":
        ranges = std + pair * 3
    elif feature_set == "trigonometric":
        ranges = (
            std[:2]
            + sphere
            + std[2:6]
            + [(0.0, vlog_cap), (-vlog_cap, vlog_cap), unit, unit, unit, unit]
            + (pair + sphere) * 3
        )
    else:
        raise ValueError(f"unknown feature set {feature_set!r}")
    mins = np.array([r[0] for r in ranges])
    maxs = np.array([r[1] for r in ranges])
    return Normalizer(mins, maxs, lat_r, lon_r)


@dataclass
class WindowSample:
    """One training/inference example cut from a track (raw, unnormalized)."""

    x: np.ndarray  # (19, F)
    y: np.ndarray  # (72, 2) as (lat, lon)
    weight: float
    mmsi: int
    track_id: int
    start_time: int  # timestamp of the shared boundary row
    vessel_type: str


def cut_windows(
    track: Track,
    rows: np.ndarray,
    stride_rows: int = STRIDE_ROWS,
    per_track_cap: int = 0,
) -> list[WindowSample]:
    """Slide a forecast anchor along the track every ``stride_rows`` fixes.

    The anchor row closes the input block and opens the target block. Inputs
    shorter than 19 rows are left-padded by replicating the earliest row;
    targets are only emitted where 72 rows exist, never padded.
    """
    n = len(track)
    samples: list[WindowSample] = []
    anchor = 0
    while anchor + TARGET_ROWS - 1 <= n - 1:
        lo = max(0, anchor - (INPUT_ROWS - 1))
        block = rows[lo : anchor + 1]
        if len(block) < INPUT_ROWS:
            pad = np.repeat(block[:1], INPUT_ROWS - len(block), axis=0)
            block = np.vstack([pad, block])
        target = np.column_stack(
            [
                track.lats[anchor : anchor + TARGET_ROWS],
                track.lons[anchor : anchor + TARGET_ROWS],
            ]
        )
        samples.append(
            WindowSample(
                x=block,
                y=target,
                weight=track.weight,
                mmsi=track.mmsi,
                track_id=track.track_id,
                start_time=int(track.times[anchor]),
                vessel_type=track.vessel_type,
            )
        )
        if per_track_cap and len(samples) >= per_track_cap:
            break
        anchor += stride_rows
    return samples


class WindowSet:
    """Normalized window tensors plus metadata, ready for training."""

    SCHEMA = "windows.v1"

    def __init__(
        self,
        feature_set: str,
        x: np.ndarray,
        y: np.ndarray,
        weights: np.ndarray,
        mmsi: np.ndarray,
        track_ids: np.ndarray,
        start_times: np.ndarray,
        vessel_types: list[str],
        normalizer: Normalizer,
    ):
        self.feature_set = feature_set
        self.x = x
        self.y = y
        self.weights = weights
        self.mmsi = mmsi
        self.track_ids = track_ids
        self.start_times = start_times
        self.vessel_types = vessel_types
        self.normalizer = normalizer

    def __len__(self) -> int:
        return len(self.x)

    @classmethod
    def from_samples(
        cls, feature_set: str, samples: list[WindowSample], normalizer: Normalizer
    ) -> "WindowSet":
        f = feature_arity(feature_set)
        n = len(samples)
        x = np.zeros((n, INPUT_ROWS, f))
        y = np.zeros((n, TARGET_ROWS, 2))
        for i, s in enumerate(samples):
            x[i] = normalizer.apply(s.x)
            y[i] = normalizer.apply_target(s.y)
        return cls(
            feature_set,
            x,
            y,
            np.array([s.weight for s in samples], dtype=np.float64),
            np.array([s.mmsi for s in samples], dtype=np.int64),
            np.array([s.track_id for s in samples], dtype=np.int64),
            np.array([s.start_time for s in samples], dtype=np.int64),
            [s.vessel_type for s in samples],
            normalizer,
        )

    def save(self, bin_path, json_path) -> None:
        blobs = [
            self.x.astype("<f8").tobytes(),
            self.y.astype("<f8").tobytes(),
            self.weights.astype("<f8").tobytes(),
            self.mmsi.astype("<i8").tobytes(),
            self.track_ids.astype("<i8").tobytes(),
            self.start_times.astype("<i8").tobytes(),
        ]
        with open(bin_path, "wb") as fh:
            for blob in blobs:
                fh.write(blob)
        sidecar = {
            "schema": self.SCHEMA,
            "feature_set": self.feature_set,
            "count": len(self),
            "input_rows": INPUT_ROWS,
            "target_rows": TARGET_ROWS,
            "arity": feature_arity(self.feature_set),
            "vessel_types": self.vessel_types,
            "normalizer": self.normalizer.to_dict(),
        }
        with open(json_path, "w") as fh:
            fh.write(json.dumps(sidecar, sort_keys=True, separators=(",", ":")))

    @classmethod
    def load(cls, bin_path, json_path) -> "WindowSet":
        with open(json_path) as fh:
            sidecar = json.load(fh)
        if sidecar.get("schema") != cls.SCHEMA:
            raise ValueError(f"unexpected window schema {sidecar.get('schema')!r}")
        n = sidecar["count"]
        f = sidecar["arity"]
        raw = open(bin_path, "rb").read()
        sizes = [n * INPUT_ROWS * f, n * TARGET_ROWS * 2, n, n, n, n]
        offsets = np.cumsum([0] + sizes) * 8
        def block(i, dtype):
            return np.frombuffer(raw[offsets[i] : offsets[i + 1]], dtype=dtype).copy()
        x = block(0, "<f8").reshape(n, INPUT_ROWS, f)
        y = block(1, "<f8").reshape(n, TARGET_ROWS, 2)
        return cls(
            sidecar["feature_set"],
            x,
            y,
            block(2, "<f8"),
            block(3, "<i8"),
            block(4, "<i8"),
            block(5, "<i8"),
            list(sidecar["vessel_types"]),
            Normalizer.from_dict(sidecar["normalizer"]),
        )

    def to_csv(self, path) -> None:
        """Long-format export for manual inspection."""
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            f = self.x.shape[2]
            writer.writerow(
                ["sample", "kind", "step"]
                + [f"f{j}" for j in range(f)]
                + ["lat_norm", "lon_norm"]
            )
            for i in range(len(self)):
                for t in range(INPUT_ROWS):
                    writer.writerow(
                        [i, "input", t] + [f"{v:.9f}" for v in self.x[i, t]] + ["", ""]
                    )
                for t in range(TARGET_ROWS):
                    writer.writerow(
                        [i, "target", t]
                        + [""] * f
                        + [f"{self.y[i, t, 0]:.9f}", f"{self.y[i, t, 1]:.9f}"]
                    )
