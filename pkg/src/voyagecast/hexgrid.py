"""Flat-top hexagonal study grid and route polygons on a lat/lon plane.

The grid treats longitude/latitude degrees as planar x/y coordinates (the
source data is referenced to a geographic CRS, so cells are equal-size in
degree space). Hexagons are flat-top with circumradius ``cell_size_deg``,
laid out in offset columns anchored at the bounding-box corner. Cell IDs are
dense, deterministic and row-major.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geo import GeoPoint

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class RoutePolygon:
    """A hand-placed traffic polygon whose crossing signals a lane commitment."""

    id: int
    ring: tuple[tuple[float, float], ...]  # (lat, lon) vertices, unclosed
    centroid: GeoPoint = field(init=False)

    def __post_init__(self) -> None:
        if len(self.ring) < 3:
            raise ValueError(f"route {self.id}: ring needs >= 3 vertices")
        lat = sum(p[0] for p in self.ring) / len(self.ring)
        lon = sum(p[1] for p in self.ring) / len(self.ring)
        object.__setattr__(self, "centroid", GeoPoint(lat, lon))

    def contains(self, p: GeoPoint) -> bool:
        return _point_in_ring(p.lat, p.lon, self.ring)


class HexGrid:
    """Immutable flat-top hexagonal tiling covering a bounding box."""

    def __init__(self, bbox: tuple[float, float, float, float], cell_size_deg: float):
        lat_min, lat_max, lon_min, lon_max = bbox
        if not (lat_max > lat_min and lon_max > lon_min):
            raise ValueError(f"degenerate bbox {bbox}")
        if cell_size_deg <= 0:
            raise ValueError(f"cell size must be positive, got {cell_size_deg}")
        self.bbox = (float(lat_min), float(lat_max), float(lon_min), float(lon_max))
        self.cell_size = float(cell_size_deg)
        self._build()

    # -- construction ------------------------------------------------------

    def _center(self, col: int, row: int) -> tuple[float, float]:
        r = self.cell_size
        lat_min, _, lon_min, _ = self.bbox
        x = lon_min + 1.5 * r * col
        y = lat_min + _SQRT3 * r * row + (col & 1) * (_SQRT3 * r / 2.0)
        return x, y

    def _build(self) -> None:
        lat_min, lat_max, lon_min, lon_max = self.bbox
        r = self.cell_size
        col_lo = -2
        col_hi = int(math.ceil((lon_max - lon_min + 2 * r) / (1.5 * r))) + 1
        row_lo = -2
        row_hi = int(math.ceil((lat_max - lat_min + 2 * r) / (_SQRT3 * r))) + 1
        rect = (lon_min, lat_min, lon_max, lat_max)

        kept: list[tuple[int, int]] = []
        for row in range(row_lo, row_hi + 1):
            for col in range(col_lo, col_hi + 1):
                cx, cy = self._center(col, row)
                verts = _hex_vertices(cx, cy, r)
                if _clip_area(verts, rect) > 1e-12:
                    kept.append((row, col))

        self.cell_count = len(kept)
        self._rowcol = kept  # id -> (row, col), row-major by construction
        self._centers = np.array(
            [self._center(c, rw) for rw, c in kept], dtype=np.float64
        )  # (n, 2) as (lon, lat)
        self._id_by_key = {(rw, c): i for i, (rw, c) in enumerate(kept)}
        self.cells = [
            tuple((vy, vx) for vx, vy in _hex_vertices(cx, cy, r))
            for cx, cy in self._centers
        ]  # (lat, lon) vertex rings

        # dense (row, col) -> id table for vectorized nearest-center lookup
        self._row_lo, self._col_lo = row_lo, col_lo
        n_rows = row_hi - row_lo + 1
        n_cols = col_hi - col_lo + 1
        table = np.full((n_rows, n_cols), -1, dtype=np.int64)
        for cid, (rw, c) in enumerate(kept):
            table[rw - row_lo, c - col_lo] = cid
        self._table = table

    # -- queries -----------------------------------------------------------

    def cell_centroid(self, cell_id: int) -> GeoPoint:
        if not 0 <= cell_id < self.cell_count:
            raise IndexError(f"cell id {cell_id} out of range")
        cx, cy = self._centers[cell_id]
        return GeoPoint(float(cy), float(cx))

    def locate(self, p: GeoPoint) -> int | None:
        """Return the id of the cell containing p, or None outside the bbox.

        A regular hexagonal tiling is the Voronoi diagram of its centers, so
        containment reduces to a nearest-center search over the neighborhood;
        equidistant boundary points resolve to the lowest claiming id.
        """
        lat_min, lat_max, lon_min, lon_max = self.bbox
        if not (lat_min <= p.lat <= lat_max and lon_min <= p.lon <= lon_max):
            return None
        return self._nearest(p.lon, p.lat)

    def locate_many(self, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
        """Vectorized locate; returns -1 for points outside the bbox."""
        lats = np.asarray(lats, dtype=np.float64)
        lons = np.asarray(lons, dtype=np.float64)
        out = np.full(lats.shape, -1, dtype=np.int64)
        lat_min, lat_max, lon_min, lon_max = self.bbox
        inside = (lats >= lat_min) & (lats <= lat_max) & (lons >= lon_min) & (lons <= lon_max)
        if not inside.any():
            return out
        r = self.cell_size
        x = lons[inside]
        y = lats[inside]
        col0 = np.floor((x - lon_min) / (1.5 * r)).astype(np.int64) - self._col_lo
        row0 = np.floor((y - lat_min) / (_SQRT3 * r)).astype(np.int64) - self._row_lo
        n_rows, n_cols = self._table.shape
        best_d = np.full(x.shape, np.inf)
        best_id = np.full(x.shape, np.iinfo(np.int64).max, dtype=np.int64)
        for drow in (-1, 0, 1):
            for dcol in (-1, 0, 1):
                rr = np.clip(row0 + drow, 0, n_rows - 1)
                cc = np.clip(col0 + dcol, 0, n_cols - 1)
                cid = self._table[rr, cc]
                valid = cid >= 0
                cx = np.where(valid, self._centers[cid, 0], np.inf)
                cy = np.where(valid, self._centers[cid, 1], np.inf)
                d = (x - cx) ** 2 + (y - cy) ** 2
                better = d < best_d
                tie = (d == best_d) & (cid < best_id) & valid
                take = (better & valid) | tie
                best_d = np.where(take, d, best_d)
                best_id = np.where(take, cid, best_id)
        out[inside] = best_id
        return out

    def _nearest(self, x: float, y: float) -> int:
        r = self.cell_size
        lat_min, _, lon_min, _ = self.bbox
        col0 = int(math.floor((x - lon_min) / (1.5 * r)))
        row0 = int(math.floor((y - lat_min) / (_SQRT3 * r)))
        best_id = -1
        best_d = math.inf
        for col in range(col0 - 1, col0 + 2):
            for row in range(row0 - 1, row0 + 2):
                cid = self._id_by_key.get((row, col))
                if cid is None:
                    continue
                cx, cy = self._centers[cid]
                d = (x - cx) ** 2 + (y - cy) ** 2
                # exact-tie boundary points resolve to the lowest claiming id
                if d < best_d or (d == best_d and cid < best_id):
                    best_d = d
                    best_id = cid
        if best_id < 0:  # bbox point whose cell was clipped away: cannot happen
            raise RuntimeError("no cell found for in-bbox point")
        return best_id

    # -- serialization -----------------------------------------------------

    def to_geojson(self) -> str:
        features = []
        for cid, ring in enumerate(self.cells):
            coords = [[lon, lat] for lat, lon in ring]
            coords.append(coords[0])
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": [coords]},
                    "properties": {"cell_id": cid},
                }
            )
        doc = {
            "type": "FeatureCollection",
            "features": features,
            "grid": {
                "schema": "grid.v1",
                "bbox": list(self.bbox),
                "cell_size_deg": self.cell_size,
                "cell_count": self.cell_count,
            },
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def which_route(routes: list[RoutePolygon], p: GeoPoint) -> int | None:
    """Lowest route id whose polygon contains p (boundary inclusive), else None."""
    for route in sorted(routes, key=lambda r: r.id):
        if route.contains(p):
            return route.id
    return None


def routes_to_geojson(routes: list[RoutePolygon]) -> str:
    features = []
    for route in sorted(routes, key=lambda r: r.id):
        coords = [[lon, lat] for lat, lon in route.ring]
        coords.append(coords[0])
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [coords]},
                "properties": {"route_id": route.id},
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def routes_from_geojson(text: str) -> list[RoutePolygon]:
    doc = json.loads(text)
    routes = []
    for feat in doc["features"]:
        geom = feat["geometry"]
        if geom["type"] != "Polygon":
            raise ValueError(f"route feature must be a Polygon, got {geom['type']}")
        ring = geom["coordinates"][0]
        if ring[0] == ring[-1]:
            ring = ring[:-1]
        routes.append(
            RoutePolygon(
                id=int(feat["properties"]["route_id"]),
                ring=tuple((float(lat), float(lon)) for lon, lat in ring),
            )
        )
    return sorted(routes, key=lambda r: r.id)


# -- planar polygon helpers --------------------------------------------------


def _hex_vertices(cx: float, cy: float, r: float) -> list[tuple[float, float]]:
    """Vertices (x, y) of a flat-top hexagon of circumradius r around (cx, cy)."""
    return [
        (cx + r * math.cos(math.radians(60.0 * k)), cy + r * math.sin(math.radians(60.0 * k)))
        for k in range(6)
    ]


def _point_in_ring(lat: float, lon: float, ring: tuple[tuple[float, float], ...]) -> bool:
    """Even-odd containment in (lat, lon) vertex ring; boundary counts inside."""
    n = len(ring)
    inside = False
    for i in range(n):
        y1, x1 = ring[i]
        y2, x2 = ring[(i + 1) % n]
        if _on_segment(lon, lat, x1, y1, x2, y2):
            return True
        if (y1 > lat) != (y2 > lat):
            x_cross = x1 + (lat - y1) * (x2 - x1) / (y2 - y1)
            if lon < x_cross:
                inside = not inside
    return inside


def _on_segment(px: float, py: float, x1: float, y1: float, x2: float, y2: float) -> bool:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    if abs(cross) > 1e-12:
        return False
    dot = (px - x1) * (x2 - x1) + (py - y1) * (y2 - y1)
    sq = (x2 - x1) ** 2 + (y2 - y1) ** 2
    return -1e-12 <= dot <= sq + 1e-12


def _clip_area(poly: list[tuple[float, float]], rect: tuple[float, float, float, float]) -> float:
    """Area of a convex polygon clipped to an axis-aligned rectangle."""
    xmin, ymin, xmax, ymax = rect
    edges = (
        lambda p: p[0] >= xmin,
        lambda p: p[0] <= xmax,
        lambda p: p[1] >= ymin,
        lambda p: p[1] <= ymax,
    )
    lines = ((0, xmin), (0, xmax), (1, ymin), (1, ymax))
    pts = poly
    for keep, (axis, level) in zip(edges, lines):
        if not pts:
            return 0.0
        nxt: list[tuple[float, float]] = []
        for i in range(len(pts)):
            cur, prv = pts[i], pts[i - 1]
            cur_in, prv_in = keep(cur), keep(prv)
            if cur_in != prv_in:
                t = (level - prv[axis]) / (cur[axis] - prv[axis])
                ix = prv[0] + t * (cur[0] - prv[0])
                iy = prv[1] + t * (cur[1] - prv[1])
                nxt.append((ix, iy))
            if cur_in:
                nxt.append(cur)
        pts = nxt
    area = 0.0
    for i in range(len(pts)):
        x1, y1 = pts[i - 1]
        x2, y2 = pts[i]
        area += x1 * y2 - x2 * y1
    return abs(area) / 2.0
