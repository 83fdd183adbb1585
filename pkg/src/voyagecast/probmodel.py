"""Per-cell motion statistics and the probabilistic route/destination model.

Each historical track leaves one motion-statistics tuple per visited grid
cell: first/last in-cell coordinates, the median in-cell bearing, and the
Gaussian-KDE entropy of in-cell bearings. Statistics are min-max normalized
per cell and compared by Euclidean distance; conditional route/destination
probabilities count distance-similar historical tracks under indicator
conditions, and a per-destination minimum-distance pass ranks the most
plausible destination cells.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geo import GeoPoint
from .hexgrid import HexGrid, RoutePolygon
from .ingest import Track

N_COMPONENTS = 6  # lat_f, lon_f, lat_e, lon_e, median bearing, bearing entropy


@dataclass(frozen=True)
class MotionStatistics:
    """How one track moved through one grid cell."""

    l_first: tuple[float, float]  # (lat, lon) of first in-cell fix
    l_last: tuple[float, float]
    theta_median: float  # gradians
    theta_entropy: float  # nats, >= 0

    def vector(self) -> tuple[float, float, float, float, float, float]:
        return (
            self.l_first[0],
            self.l_first[1],
            self.l_last[0],
            self.l_last[1],
            self.theta_median,
            self.theta_entropy,
        )


def kde_entropy(values) -> float:
    """Resubstitution entropy of a 1-D Gaussian KDE with Scott bandwidth.

    Returns 0 for fewer than two samples or zero variance, where the density
    degenerates.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sample")
    if x.size < 2:
        return 0.0
    var = float(np.var(x, ddof=1))
    if var == 0.0:
        return 0.0
    h2 = var * x.size ** (-2.0 / 5.0)
    sq = (x[:, None] - x[None, :]) ** 2
    dens = np.exp(-sq / (2.0 * h2)).sum(axis=1) / (x.size * math.sqrt(2.0 * math.pi * h2))
    return float(-np.mean(np.log(dens)))


def motion_statistics(lats, lons, thetas) -> MotionStatistics:
    """Statistics of a track's in-cell fixes, in visit order."""
    if len(lats) == 0:
        raise ValueError("no in-cell points")
    return MotionStatistics(
        l_first=(float(lats[0]), float(lons[0])),
        l_last=(float(lats[-1]), float(lons[-1])),
        theta_median=float(np.median(np.asarray(thetas, dtype=np.float64))),
        theta_entropy=kde_entropy(thetas),
    )


def normalize_vector(vec, mins, maxs) -> np.ndarray:
    """Min-max normalize a statistics vector, clamped to [0, 1]."""
    out = np.zeros(N_COMPONENTS)
    for k in range(N_COMPONENTS):
        span = maxs[k] - mins[k]
        if span > 0.0:
            out[k] = min(1.0, max(0.0, (vec[k] - mins[k]) / span))
    return out


def stat_distance_normalized(a: np.ndarray, b: np.ndarray):
    """Euclidean distance over normalized statistics; coordinate pairs average.

    Both endpoints contribute their lat and lon deltas with the pair mean, so
    four unit-range groups bound the distance by 2.
    """
    dlatf = a[..., 0] - b[..., 0]
    dlonf = a[..., 1] - b[..., 1]
    dlate = a[..., 2] - b[..., 2]
    dlone = a[..., 3] - b[..., 3]
    dmed = a[..., 4] - b[..., 4]
    dent = a[..., 5] - b[..., 5]
    return np.sqrt(
        (dlatf * dlatf + dlonf * dlonf) / 2.0
        + (dlate * dlate + dlone * dlone) / 2.0
        + dmed * dmed
        + dent * dent
    )


def stat_distance(a: MotionStatistics, b: MotionStatistics, mins, maxs) -> float:
    """Distance between two raw statistics tuples under shared min-max norms."""
    return float(
        stat_distance_normalized(
            normalize_vector(a.vector(), mins, maxs),
            normalize_vector(b.vector(), mins, maxs),
        )
    )


def first_quartile(values: np.ndarray) -> float:
    """25th percentile with linear interpolation between order statistics."""
    d = np.sort(np.asarray(values, dtype=np.float64))
    if d.size == 0:
        return math.inf
    h = (d.size - 1) * 0.25
    lo = int(h)
    frac = h - lo
    if lo + 1 >= d.size:
        return float(d[lo])
    return float(d[lo] + frac * (d[lo + 1] - d[lo]))


@dataclass
class CellHistory:
    """All historical entries recorded for one grid cell."""

    track_ids: list[int]
    stats: list[MotionStatistics]
    dests: list[int]
    routes: list[tuple[int, ...]]  # sorted route ids crossed by each track
    mins: np.ndarray | None = None
    maxs: np.ndarray | None = None
    normalized: np.ndarray | None = None  # (n, 6)
    delta: float = math.inf
    dest_arr: np.ndarray | None = None
    route_ids: list[int] | None = None
    route_matrix: np.ndarray | None = None  # (n, n_routes) crossing flags

    def __len__(self) -> int:
        return len(self.track_ids)

    def finalize(self) -> None:
        raw = np.array([s.vector() for s in self.stats], dtype=np.float64)
        self.mins = raw.min(axis=0)
        self.maxs = raw.max(axis=0)
        self.normalized = np.stack(
            [normalize_vector(v, self.mins, self.maxs) for v in raw]
        )
        self.dest_arr = np.array(self.dests, dtype=np.int64)
        seen: set[int] = set()
        for r in self.routes:
            seen.update(r)
        self.route_ids = sorted(seen)
        self.route_matrix = np.zeros((len(self.track_ids), len(self.route_ids)), dtype=bool)
        for i, crossed in enumerate(self.routes):
            for r in crossed:
                self.route_matrix[i, self.route_ids.index(r)] = True
        n = len(self.track_ids)
        if n < 2:
            self.delta = math.inf
            return
        dists: list[np.ndarray] = []
        for i in range(n - 1):
            d = stat_distance_normalized(self.normalized[i], self.normalized[i + 1 :])
            dists.append(np.atleast_1d(d))
        self.delta = first_quartile(np.concatenate(dists))

    def route_mask(self, route: int) -> np.ndarray:
        try:
            col = self.route_ids.index(route)
        except ValueError:
            return np.zeros(len(self.track_ids), dtype=bool)
        return self.route_matrix[:, col]


class ProbabilityStore:
    """Historical motion statistics keyed by cell, with route/destination views."""

    SCHEMA = "probstore.v1"

    def __init__(self) -> None:
        self.cells: dict[int, CellHistory] = {}

    # -- construction -------------------------------------------------------

    @classmethod
    def build(
        cls, tracks: list[Track], grid: HexGrid, routes: list[RoutePolygon]
    ) -> "ProbabilityStore":
        if not tracks:
            raise ValueError("empty corpus")
        store = cls()
        for track in sorted(tracks, key=lambda t: t.track_id):
            cells = grid.locate_many(track.lats, track.lons)
            crossed = _routes_crossed(track, routes)
            last_cell = int(cells[-1])
            if last_cell < 0:
                continue
            for cell, idx in _group_by_cell(cells):
                stats = motion_statistics(
                    track.lats[idx], track.lons[idx], track.theta[idx]
                )
                hist = store.cells.get(cell)
                if hist is None:
                    hist = CellHistory([], [], [], [])
                    store.cells[cell] = hist
                hist.track_ids.append(track.track_id)
                hist.stats.append(stats)
                hist.dests.append(last_cell)
                hist.routes.append(crossed)
        for hist in store.cells.values():
            hist.finalize()
        return store

    # -- queries -------------------------------------------------------------

    def normalized_query(self, cell: int, s_new: MotionStatistics) -> np.ndarray:
        hist = self.cells[cell]
        return normalize_vector(s_new.vector(), hist.mins, hist.maxs)

    def _distances(self, cell: int, s_new: MotionStatistics) -> np.ndarray:
        hist = self.cells[cell]
        q = self.normalized_query(cell, s_new)
        return stat_distance_normalized(q, hist.normalized)

    @staticmethod
    def _p_route_given(hist: CellHistory, similar: np.ndarray, route: int) -> float:
        den = int(similar.sum())
        if den == 0:
            return 0.0
        num = int((similar & hist.route_mask(route)).sum())
        return num / den

    @staticmethod
    def _p_dest_given_route_given(
        hist: CellHistory, similar: np.ndarray, route: int, dest: int
    ) -> float:
        base = similar & hist.route_mask(route)
        den = int(base.sum())
        if den == 0:
            return 0.0
        num = int((base & (hist.dest_arr == dest)).sum())
        return num / den

    @staticmethod
    def _p_dest_given(hist: CellHistory, similar: np.ndarray, dest: int) -> float:
        den = int(similar.sum())
        if den == 0:
            return 0.0
        num = int((similar & (hist.dest_arr == dest)).sum())
        return num / den

    def p_route(self, cell: int, s_new: MotionStatistics, route: int) -> float:
        """Share of distance-similar tracks through the cell that cross the route."""
        hist = self.cells.get(cell)
        if hist is None or len(hist) == 0:
            return 0.0
        similar = self._distances(cell, s_new) <= hist.delta
        return self._p_route_given(hist, similar, route)

    def p_dest_given_route(
        self, cell: int, route: int, s_new: MotionStatistics, dest: int
    ) -> float:
        hist = self.cells.get(cell)
        if hist is None or len(hist) == 0:
            return 0.0
        similar = self._distances(cell, s_new) <= hist.delta
        return self._p_dest_given_route_given(hist, similar, route, dest)

    def p_dest(self, cell: int, s_new: MotionStatistics, dest: int) -> float:
        hist = self.cells.get(cell)
        if hist is None or len(hist) == 0:
            return 0.0
        similar = self._distances(cell, s_new) <= hist.delta
        return self._p_dest_given(hist, similar, dest)

    def _candidate_routes(self, cell: int) -> list[int]:
        hist = self.cells[cell]
        seen: set[int] = set()
        for r in hist.routes:
            seen.update(r)
        return sorted(seen)

    def _candidate_dests(self, cell: int) -> list[int]:
        return sorted(set(self.cells[cell].dests))

    def _xi(self, distances: np.ndarray, mask) -> float:
        """Similarity 1 - min distance over masked entries, clamped to [0, 1]."""
        sel = distances[mask]
        if sel.size == 0:
            return 0.0
        return max(0.0, 1.0 - float(sel.min()))

    def _route_scores_given(self, hist: CellHistory, d: np.ndarray) -> list[tuple[int, float]]:
        similar = d <= hist.delta
        out = []
        for route in hist.route_ids:
            xi = self._xi(d, hist.route_mask(route))
            out.append((route, xi * self._p_route_given(hist, similar, route)))
        return out

    def _dest_scores_given(self, hist: CellHistory, d: np.ndarray) -> list[tuple[int, float]]:
        similar = d <= hist.delta
        route_scores = self._route_scores_given(hist, d)
        best_route = None
        if route_scores:
            top = max(route_scores, key=lambda rs: (rs[1], -rs[0]))
            if top[1] > 0.0:
                best_route = top[0]
        scored = []
        for dest in sorted(set(hist.dests)):
            xi = self._xi(d, hist.dest_arr == dest)
            if best_route is not None:
                p = self._p_dest_given_route_given(hist, similar, best_route, dest)
            else:
                p = self._p_dest_given(hist, similar, dest)
            scored.append((dest, xi * p))
        scored.sort(key=lambda ds: (-ds[1], ds[0]))
        return scored

    def route_scores(self, cell: int, s_new: MotionStatistics) -> list[tuple[int, float]]:
        hist = self.cells.get(cell)
        if hist is None or len(hist) == 0:
            return []
        return self._route_scores_given(hist, self._distances(cell, s_new))

    def score_destination(
        self, cell: int, s_new: MotionStatistics
    ) -> list[tuple[int, float]]:
        """Similarity-weighted destination scores, best first.

        Conditions on the best-scoring route when any route interacts with
        similar traffic, otherwise falls back to the route-free probability.
        """
        hist = self.cells.get(cell)
        if hist is None or len(hist) == 0:
            return []
        return self._dest_scores_given(hist, self._distances(cell, s_new))

    def score_route(
        self, cell: int, s_new: MotionStatistics
    ) -> tuple[int, float, bool] | None:
        """Best route score, or the best destination when no route interacts."""
        hist = self.cells.get(cell)
        if hist is None or len(hist) == 0:
            return None
        d = self._distances(cell, s_new)
        scores = self._route_scores_given(hist, d)
        if scores:
            best = max(scores, key=lambda rs: (rs[1], -rs[0]))
            if best[1] > 0.0:
                return (best[0], best[1], True)
        dests = self._dest_scores_given(hist, d)
        if not dests:
            return None
        return (dests[0][0], dests[0][1], False)

    def possible_destinations(
        self, cell: int, s_new: MotionStatistics, k: int
    ) -> list[tuple[int, float]]:
        """Top-k candidate destination cells by ascending weighted distance.

        Per destination the minimum statistics distance is kept; candidates
        above the mean of those minima are excluded, and survivors rank by
        min distance discounted by the destination's traffic share.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        hist = self.cells.get(cell)
        if hist is None or len(hist) == 0:
            return []
        d = self._distances(cell, s_new).tolist()
        dests = self._candidate_dests(cell)
        d_min: dict[int, float] = {}
        for dest in dests:
            d_min[dest] = min(d[i] for i in range(len(hist)) if hist.dests[i] == dest)
        mins = [d_min[dest] for dest in dests]
        delta = sum(mins) / len(mins)
        total = len(hist)

        def score(dest: int) -> float:
            prob = sum(1 for dd in hist.dests if dd == dest) / total
            return d_min[dest] * (1.0 - prob)

        survivors = [dest for dest in dests if d_min[dest] < delta]
        if not survivors:
            # all minima equal the mean (e.g. a single candidate): the
            # threshold cannot discriminate, so keep every candidate
            survivors = dests
        updated = sorted(((dest, score(dest)) for dest in survivors), key=lambda ds: (ds[1], ds[0]))
        return updated[:k]

    # -- serialization --------------------------------------------------------

    def to_json(self) -> str:
        cells = {}
        for cell in sorted(self.cells):
            hist = self.cells[cell]
            entries = []
            for i in range(len(hist)):
                v = hist.stats[i].vector()
                entries.append(
                    [hist.track_ids[i], *v, hist.dests[i], list(hist.routes[i])]
                )
            cells[str(cell)] = {"entries": entries}
        return json.dumps(
            {"schema": self.SCHEMA, "cells": cells},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ProbabilityStore":
        doc = json.loads(text)
        if doc.get("schema") != cls.SCHEMA:
            raise ValueError(f"unexpected store schema {doc.get('schema')!r}")
        store = cls()
        for key, payload in doc["cells"].items():
            hist = CellHistory([], [], [], [])
            for entry in payload["entries"]:
                track_id, latf, lonf, late, lone, med, ent, dest, routes = entry
                hist.track_ids.append(int(track_id))
                hist.stats.append(
                    MotionStatistics((latf, lonf), (late, lone), med, ent)
                )
                hist.dests.append(int(dest))
                hist.routes.append(tuple(int(r) for r in routes))
            hist.finalize()
            store.cells[int(key)] = hist
        return store


# -- track-level helpers --------------------------------------------------------


def _group_by_cell(cells: np.ndarray) -> list[tuple[int, np.ndarray]]:
    """Pool fix indices by cell id, ordered by first visit; drops off-grid fixes."""
    order: list[int] = []
    groups: dict[int, list[int]] = {}
    for i, c in enumerate(cells.tolist()):
        if c < 0:
            continue
        if c not in groups:
            groups[c] = []
            order.append(c)
        groups[c].append(i)
    return [(c, np.array(groups[c], dtype=np.int64)) for c in order]


def _routes_crossed(track: Track, routes: list[RoutePolygon]) -> tuple[int, ...]:
    crossed = []
    for route in sorted(routes, key=lambda r: r.id):
        for i in range(len(track)):
            if route.contains(track.point(i)):
                crossed.append(route.id)
                break
    return tuple(crossed)


def track_statistics(track: Track, grid: HexGrid) -> list[tuple[int, MotionStatistics]]:
    """Pooled per-cell motion statistics for a track, in first-visit order."""
    cells = grid.locate_many(track.lats, track.lons)
    out = []
    for cell, idx in _group_by_cell(cells):
        out.append(
            (cell, motion_statistics(track.lats[idx], track.lons[idx], track.theta[idx]))
        )
    return out


def classify_track(
    store: ProbabilityStore, grid: HexGrid, track: Track
) -> tuple[int | None, int | None]:
    """Aggregate per-cell route/destination votes into one track-level call."""
    route_votes: dict[int, float] = {}
    dest_votes: dict[int, float] = {}
    for cell, stats in track_statistics(track, grid):
        hist = store.cells.get(cell)
        if hist is None or len(hist) == 0:
            continue
        d = store._distances(cell, stats)
        route_scores = store._route_scores_given(hist, d)
        if route_scores:
            best = max(route_scores, key=lambda rs: (rs[1], -rs[0]))
            if best[1] > 0.0:
                route_votes[best[0]] = route_votes.get(best[0], 0.0) + best[1]
        for dest, score in store._dest_scores_given(hist, d):
            dest_votes[dest] = dest_votes.get(dest, 0.0) + score
    route = _argmax_vote(route_votes)
    dest = _argmax_vote(dest_votes)
    return route, dest


def _argmax_vote(votes: dict[int, float]) -> int | None:
    if not votes:
        return None
    return min(votes, key=lambda k: (-votes[k], k))


# -- per-message feature emission -------------------------------------------------


def emit_probabilistic_features(
    store: ProbabilityStore,
    grid: HexGrid,
    routes: list[RoutePolygon],
    track: Track,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-fix (route, current-cell, destination) centroid features.

    Returns an (n, 6) array of (R_lon, R_lat, N_lon, N_lat, D_lon, D_lat)
    and a boolean flag array marking fixes outside the grid. Predictions are
    causal: each fix sees only the statistics accumulated so far in the
    current cell run, and fixes with no usable history inherit the previous
    fix's centroids (or the current-cell centroid at the start of a track).
    """
    n = len(track)
    cells = grid.locate_many(track.lats, track.lons)
    route_centroids = {r.id: r.centroid for r in routes}
    out = np.zeros((n, 6))
    flagged = np.zeros(n, dtype=bool)
    prev_row: np.ndarray | None = None
    run_cell = -2
    run_start = 0
    for i in range(n):
        cell = int(cells[i])
        if cell < 0:
            flagged[i] = True
            if prev_row is not None:
                out[i] = prev_row
            else:
                own = (track.lons[i], track.lats[i])
                out[i] = [own[0], own[1], own[0], own[1], own[0], own[1]]
            prev_row = out[i].copy()
            run_cell = -2
            continue
        if cell != run_cell:
            run_cell = cell
            run_start = i
        n_centroid = grid.cell_centroid(cell)
        s_now = motion_statistics(
            track.lats[run_start : i + 1],
            track.lons[run_start : i + 1],
            track.theta[run_start : i + 1],
        )
        r_point = None
        d_point = None
        hist = store.cells.get(cell)
        if hist is not None and len(hist) > 0:
            d = store._distances(cell, s_now)
            route_scores = store._route_scores_given(hist, d)
            ranked = store._dest_scores_given(hist, d)
            best_route = max(route_scores, key=lambda rs: (rs[1], -rs[0])) if route_scores else None
            if best_route is not None and best_route[1] > 0.0:
                r_point = route_centroids[best_route[0]]
            elif ranked:
                r_point = grid.cell_centroid(ranked[0][0])
            if ranked:
                d_point = grid.cell_centroid(ranked[0][0])
        if r_point is None or d_point is None:
            if prev_row is not None:
                fallback = prev_row
            else:
                fallback = np.array(
                    [
                        n_centroid.lon,
                        n_centroid.lat,
                        n_centroid.lon,
                        n_centroid.lat,
                        n_centroid.lon,
                        n_centroid.lat,
                    ]
                )
            r_point = r_point or GeoPoint(fallback[1], fallback[0])
            d_point = d_point or GeoPoint(fallback[5], fallback[4])
        out[i] = [
            r_point.lon,
            r_point.lat,
            n_centroid.lon,
            n_centroid.lat,
            d_point.lon,
            d_point.lat,
        ]
        prev_row = out[i].copy()
    return out, flagged
