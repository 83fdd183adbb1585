"""Batch pipeline stages wiring the library end to end over file artifacts.

Each stage reads the previous stage's artifacts (matched by configuration
hash), writes its own, and returns a one-line summary. All outputs are
deterministic for a fixed configuration and seed: rerunning a stage
reproduces byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import ingest as ing
from .config import MissingArtifact, PipelineConfig, require
from .features import (
    Normalizer,
    WindowSet,
    assemble_features,
    cut_windows,
    feature_arity,
    fit_normalizer,
)
from .hexgrid import HexGrid, routes_from_geojson, routes_to_geojson
from .metrics import haversine_error_report, report_markdown
from .nn import Forecaster, ModelConfig, history_csv, train
from .probmodel import ProbabilityStore, emit_probabilistic_features
from .synth import fork_world, generate, write_labels_csv, write_messages_csv

TRACKS_SCHEMA = "tracks.v1"
PREDICTIONS_SCHEMA = "predictions.v1"
REPORT_SCHEMA = "report.v1"


def build_grid(cfg: PipelineConfig) -> HexGrid:
    return HexGrid(cfg.grid.bbox, cfg.grid.cell_size_deg)


# -- stage: synth ---------------------------------------------------------------


def stage_synth(cfg: PipelineConfig, out_dir=None) -> str:
    if cfg.synth.world != "fork":
        raise ValueError(f"unknown synthetic world {cfg.synth.world!r}")
    world = fork_world(
        seed=cfg.seed,
        vessel_count=cfg.synth.vessels,
        cross_track_sigma_km=cfg.synth.cross_track_sigma_km,
        speed_sigma_kn=cfg.synth.speed_sigma_kn,
        bbox=cfg.grid.bbox,
        cell_size_deg=cfg.grid.cell_size_deg,
    )
    messages, labels = generate(world)
    csv_path, labels_path, routes_path = cfg.artifact_paths("synth", out_dir)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_messages_csv(messages, csv_path)
    write_labels_csv(labels, labels_path)
    routes_path.write_text(routes_to_geojson(world.routes))
    return f"synth: {len(messages)} messages from {cfg.synth.vessels} vessels -> {csv_path.name}"


# -- stage: grid ------------------------------------------------------------------


def stage_grid(cfg: PipelineConfig, out_dir=None) -> str:
    grid = build_grid(cfg)
    (path,) = cfg.artifact_paths("grid", out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(grid.to_geojson())
    return f"grid: {grid.cell_count} cells -> {path.name}"


# -- stage: ingest ------------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig, out_dir=None) -> str:
    grid = build_grid(cfg)
    if cfg.paths.input_csv:
        csv_path = Path(cfg.paths.input_csv)
        if not csv_path.exists():
            raise MissingArtifact(f"input CSV {csv_path} not found")
    else:
        csv_path = require(cfg.artifact("synth", ".csv", out_dir), "synth")
    report = ing.parse_csv(csv_path)
    ports = ing.load_ports(cfg.paths.ports_csv) if cfg.paths.ports_csv else None
    th = cfg.thresholds
    raw_tracks = ing.segment(report.messages, th.gap_hours, th.gap_km)
    cleaned = ing.clean(
        raw_tracks,
        grid,
        ports=ports,
        port_radius_km=th.port_radius_km,
        same_port_radius_km=th.same_port_radius_km,
        min_pattern_count=th.min_pattern_count,
    )
    final: list[ing.Track] = []
    for track in cleaned.tracks:
        resampled = ing.interpolate_10min(track)
        for piece in ing.split_on_turn(resampled, th.turn_limit_gradian):
            piece.track_id = len(final)
            final.append(piece)
    if cfg.augment:
        final = ing.augment_reverse(final)
    final = ing.assign_strata(final, grid)
    if not final:
        raise MissingArtifact("no tracks survived cleaning")
    splits = ing.stratify_and_split(final, cfg.split.test, cfg.split.val_of_rest, cfg.seed)
    json_path, csv_out = cfg.artifact_paths("ingest", out_dir)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    save_tracks(splits, json_path)
    ing.tracks_to_csv([t for ts in splits.values() for t in ts], csv_out)
    sizes = {k: len(v) for k, v in splits.items()}
    return (
        f"ingest: {sum(sizes.values())} tracks "
        f"(train {sizes['train']} / val {sizes['val']} / test {sizes['test']}, "
        f"skipped {report.skipped} rows) -> {json_path.name}"
    )


def save_tracks(splits: dict[str, list[ing.Track]], path: Path) -> None:
    doc = {"schema": TRACKS_SCHEMA, "splits": {}}
    for split in ("train", "val", "test"):
        doc["splits"][split] = [
            {
                "track_id": t.track_id,
                "mmsi": t.mmsi,
                "vessel_type": t.vessel_type,
                "weight": t.weight,
                "stratum": list(t.stratum),
                "is_reversed": t.is_reversed,
                "times": t.times.tolist(),
                "lats": t.lats.tolist(),
                "lons": t.lons.tolist(),
                "v": t.v.tolist(),
                "dv": t.dv.tolist(),
                "theta": t.theta.tolist(),
                "dtheta": t.dtheta.tolist(),
            }
            for t in splits[split]
        ]
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def load_tracks(path: Path) -> dict[str, list[ing.Track]]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != TRACKS_SCHEMA:
        raise ValueError(f"unexpected tracks schema {doc.get('schema')!r}")
    out: dict[str, list[ing.Track]] = {}
    for split, items in doc["splits"].items():
        tracks = []
        for item in items:
            track = ing.Track(
                mmsi=item["mmsi"],
                vessel_type=item["vessel_type"],
                track_id=item["track_id"],
                times=np.array(item["times"], dtype=np.int64),
                lats=np.array(item["lats"], dtype=np.float64),
                lons=np.array(item["lons"], dtype=np.float64),
                v=np.array(item["v"], dtype=np.float64),
                dv=np.array(item["dv"], dtype=np.float64),
                theta=np.array(item["theta"], dtype=np.float64),
                dtheta=np.array(item["dtheta"], dtype=np.float64),
                stratum=tuple(item["stratum"]),
                weight=item["weight"],
                split=split,
                is_reversed=item["is_reversed"],
            )
            tracks.append(track)
        out[split] = tracks
    return out


# -- stage: fit-prob -------------------------------------------------------------------


def _load_routes(cfg: PipelineConfig, out_dir=None):
    if cfg.paths.routes_geojson:
        path = Path(cfg.paths.routes_geojson)
        if not path.exists():
            raise MissingArtifact(f"routes file {path} not found")
    else:
        path = require(cfg.artifact("synth", ".geojson", out_dir), "synth")
    return routes_from_geojson(path.read_text())


def stage_fit_prob(cfg: PipelineConfig, out_dir=None) -> str:
    grid = build_grid(cfg)
    tracks = load_tracks(require(cfg.artifact("ingest", ".json", out_dir), "ingest"))
    routes = _load_routes(cfg, out_dir)
    store = ProbabilityStore.build(tracks["train"], grid, routes)
    (path,) = cfg.artifact_paths("fit-prob", out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(store.to_json())
    entries = sum(len(h) for h in store.cells.values())
    return f"fit-prob: {entries} statistics across {len(store.cells)} cells -> {path.name}"


# -- stage: featurize ----------------------------------------------------------------------


def stage_featurize(cfg: PipelineConfig, out_dir=None) -> str:
    grid = build_grid(cfg)
    tracks = load_tracks(require(cfg.artifact("ingest", ".json", out_dir), "ingest"))
    store = None
    routes = []
    if cfg.feature_set != "standard":
        routes = _load_routes(cfg, out_dir)
        store_path = require(cfg.artifact("fit-prob", ".json", out_dir), "fit-prob")
        store = ProbabilityStore.from_json(store_path.read_text())
    normalizer = fit_normalizer(cfg.feature_set, cfg.grid.bbox, cfg.speed_cap_kn)
    stride_rows = max(1, cfg.windows.stride_min // 10)
    counts = {}
    paths = cfg.artifact_paths("featurize", out_dir)
    for k, split in enumerate(("train", "val", "test")):
        samples = []
        for track in tracks[split]:
            if cfg.feature_set == "standard":
                rows = assemble_features(track, "standard")
            else:
                centroids, _ = emit_probabilistic_features(store, grid, routes, track)
                rows = assemble_features(track, cfg.feature_set, centroids)
            samples.extend(cut_windows(track, rows, stride_rows, cfg.windows.per_track_cap))
        ws = WindowSet.from_samples(cfg.feature_set, samples, normalizer)
        bin_path, json_path = paths[2 * k], paths[2 * k + 1]
        bin_path.parent.mkdir(parents=True, exist_ok=True)
        ws.save(bin_path, json_path)
        counts[split] = len(ws)
    return (
        f"featurize[{cfg.feature_set}]: windows train {counts['train']} / "
        f"val {counts['val']} / test {counts['test']}"
    )


def load_windows(cfg: PipelineConfig, split: str, out_dir=None) -> WindowSet:
    paths = cfg.artifact_paths("featurize", out_dir)
    k = ("train", "val", "test").index(split)
    bin_path = require(paths[2 * k], "featurize")
    json_path = require(paths[2 * k + 1], "featurize")
    return WindowSet.load(bin_path, json_path)


# -- stage: train -------------------------------------------------------------------------------


def model_config(cfg: PipelineConfig) -> ModelConfig:
    m = cfg.model
    return ModelConfig(
        ablation=cfg.ablation,
        input_features=feature_arity(cfg.feature_set),
        output_steps=72,
        conv_filters=m.conv_filters,
        conv_kernels=m.conv_kernels,
        dilation=m.dilation,
        pool_h=m.pool_h,
        dropout=m.dropout,
        lstm_units=m.lstm_units,
        attention_omega=m.attention_omega,
        dense_units=m.dense_units,
        l2=m.l2,
        learning_rate=m.learning_rate,
        weight_decay=m.weight_decay,
        lat_range=(cfg.grid.lat_min, cfg.grid.lat_max),
        lon_range=(cfg.grid.lon_min, cfg.grid.lon_max),
        seed=cfg.seed,
    )


def stage_train(cfg: PipelineConfig, out_dir=None) -> str:
    train_ws = load_windows(cfg, "train", out_dir)
    val_ws = load_windows(cfg, "val", out_dir)
    model = Forecaster(model_config(cfg))
    result = train(
        model,
        (train_ws.x, train_ws.y, train_ws.weights),
        (val_ws.x, val_ws.y),
        max_epochs=cfg.model.epochs,
        patience=cfg.model.patience,
        batch_size=cfg.model.batch_size,
    )
    json_path, bin_path, log_path = cfg.artifact_paths("train", out_dir)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    model.save(json_path, bin_path)
    log_path.write_text(history_csv(result))
    return (
        f"train[{cfg.ablation}/{cfg.feature_set}]: {len(result.history)} epochs, "
        f"best val {result.best_val_loss:.6f} @ {result.best_epoch} -> {json_path.name}"
    )


# -- stage: predict -------------------------------------------------------------------------------


def stage_predict(cfg: PipelineConfig, out_dir=None) -> str:
    test_ws = load_windows(cfg, "test", out_dir)
    model = Forecaster.load(
        require(cfg.artifact("train", ".json", out_dir), "train"),
        require(cfg.artifact("train", ".bin", out_dir), "train"),
    )
    if model.config.input_features != test_ws.x.shape[2]:
        raise ValueError("model/window feature arity mismatch")
    norm = test_ws.normalizer
    features = []
    chunk = 256
    preds = np.zeros_like(test_ws.y)
    for lo in range(0, len(test_ws), chunk):
        sl = slice(lo, min(lo + chunk, len(test_ws)))
        preds[sl] = model.forward(test_ws.x[sl], train=False)
    for i in range(len(test_ws)):
        raw_in = norm.invert(test_ws.x[i])
        truth = norm.invert_target(test_ws.y[i])
        pred = norm.invert_target(preds[i])
        meta = {
            "sample": i,
            "mmsi": int(test_ws.mmsi[i]),
            "track_id": int(test_ws.track_ids[i]),
            "start_time": int(test_ws.start_times[i]),
            "vessel_type": test_ws.vessel_types[i],
        }
        for kind, coords in (
            ("input", [[float(r[0]), float(r[1])] for r in raw_in]),
            ("truth", [[float(p[1]), float(p[0])] for p in truth]),
            ("prediction", [[float(p[1]), float(p[0])] for p in pred]),
        ):
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "LineString", "coordinates": coords},
                    "properties": {**meta, "kind": kind},
                }
            )
    doc = {
        "type": "FeatureCollection",
        "features": features,
        "voyagecast": {"schema": PREDICTIONS_SCHEMA, "count": len(test_ws)},
    }
    (path,) = cfg.artifact_paths("predict", out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return f"predict: {len(test_ws)} samples -> {path.name}"


def load_predictions(path: Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Pooled (truth, prediction) (n, 72, 2) lat/lon arrays plus vessel types."""
    doc = json.loads(Path(path).read_text())
    meta = doc.get("voyagecast", {})
    if meta.get("schema") != PREDICTIONS_SCHEMA:
        raise ValueError(f"unexpected predictions schema {meta.get('schema')!r}")
    count = meta["count"]
    truth = np.zeros((count, 72, 2))
    pred = np.zeros((count, 72, 2))
    vtypes = [""] * count
    for feat in doc["features"]:
        props = feat["properties"]
        kind = props["kind"]
        if kind == "input":
            continue
        i = props["sample"]
        coords = np.array(feat["geometry"]["coordinates"])  # (72, 2) lon/lat
        latlon = coords[:, ::-1]
        if kind == "truth":
            truth[i] = latlon
            vtypes[i] = props["vessel_type"]
        else:
            pred[i] = latlon
    return truth, pred, vtypes


# -- stage: evaluate ---------------------------------------------------------------------------------


def stage_evaluate(cfg: PipelineConfig, out_dir=None) -> str:
    (pred_path,) = cfg.artifact_paths("predict", out_dir)
    require(pred_path, "predict")
    truth, pred, vtypes = load_predictions(pred_path)
    norm = fit_normalizer(cfg.feature_set, cfg.grid.bbox, cfg.speed_cap_kn)
    label = f"{cfg.ablation}/{cfg.feature_set}"
    rows = [(label, _report(truth, pred, norm))]
    for vtype in sorted(set(vtypes)):
        mask = np.array([v == vtype for v in vtypes])
        if mask.any() and not mask.all():
            rows.append((f"{label}:{vtype}", _report(truth[mask], pred[mask], norm)))
    json_path, md_path = cfg.artifact_paths("evaluate", out_dir)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema": REPORT_SCHEMA, "reports": {lbl: rep.to_dict() for lbl, rep in rows}}
    json_path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    md_path.write_text(report_markdown(rows))
    top = rows[0][1]
    return (
        f"evaluate: mean {top.mean_km:.3f} km, median {top.p50_km:.3f} km, "
        f"r2 {top.r2:.4f} over {len(top.errors_km)} points -> {json_path.name}"
    )


def _report(truth, pred, norm: Normalizer):
    flat_t = truth.reshape(-1, 2)
    flat_p = pred.reshape(-1, 2)
    return haversine_error_report(
        flat_t, flat_p, norm.apply_target(flat_t), norm.apply_target(flat_p)
    )


STAGE_FUNCTIONS = {
    "synth": stage_synth,
    "grid": stage_grid,
    "ingest": stage_ingest,
    "fit-prob": stage_fit_prob,
    "featurize": stage_featurize,
    "train": stage_train,
    "predict": stage_predict,
    "evaluate": stage_evaluate,
}
