"""Pipeline configuration: JSON-loadable settings and per-stage hashing.

Every batch stage derives a short hash from the slice of the configuration
that can influence its output (its dependency closure). Artifact filenames
embed that hash, so artifacts from different configurations can never be
mixed, and re-running a stage with the same configuration overwrites the
same bytes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

FEATURE_SETS = ("standard", "probabilistic", "trigonometric")
ABLATIONS = ("c1", "c2", "c3", "c4", "c5")

STAGES = ("synth", "grid", "ingest", "fit-prob", "featurize", "train", "predict", "evaluate")

# configuration sections feeding each stage, cumulatively
_STAGE_SECTIONS = {
    "synth": ("seed", "grid", "synth"),
    "grid": ("grid",),
    "ingest": ("seed", "grid", "synth", "thresholds", "split", "augment"),
    "fit-prob": ("seed", "grid", "synth", "thresholds", "split", "augment"),
    "featurize": (
        "seed", "grid", "synth", "thresholds", "split", "augment",
        "feature_set", "speed_cap_kn", "windows",
    ),
    "train": (
        "seed", "grid", "synth", "thresholds", "split", "augment",
        "feature_set", "speed_cap_kn", "windows", "ablation", "model",
    ),
}
_STAGE_SECTIONS["predict"] = _STAGE_SECTIONS["train"]
_STAGE_SECTIONS["evaluate"] = _STAGE_SECTIONS["train"]

_STAGE_FILES = {
    "synth": ("synth.{h}.csv", "labels.{h}.csv", "routes.{h}.geojson"),
    "grid": ("grid.{h}.geojson",),
    "ingest": ("tracks.{h}.json", "tracks.{h}.csv"),
    "fit-prob": ("probstore.{h}.json",),
    "featurize": tuple(
        f"windows-{split}.{{h}}.{ext}" for split in ("train", "val", "test") for ext in ("bin", "json")
    ),
    "train": ("model.{h}.json", "model.{h}.bin", "trainlog.{h}.csv"),
    "predict": ("predictions.{h}.geojson",),
    "evaluate": ("report.{h}.json", "report.{h}.md"),
}


@dataclass
class GridConfig:
    lat_min: float = 44.0
    lat_max: float = 48.0
    lon_min: float = -63.0
    lon_max: float = -55.5
    cell_size_deg: float = 0.3

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (self.lat_min, self.lat_max, self.lon_min, self.lon_max)


@dataclass
class Thresholds:
    gap_hours: float = 8.0
    gap_km: float = 50.0
    port_radius_km: float = 1.0
    same_port_radius_km: float = 10.0
    turn_limit_gradian: float = 45.0
    min_pattern_count: int = 5


@dataclass
class SplitConfig:
    test: float = 0.20
    val_of_rest: float = 0.20


@dataclass
class WindowConfig:
    stride_min: int = 30
    per_track_cap: int = 0  # 0 = unlimited


@dataclass
class SynthConfig:
    world: str = "fork"
    vessels: int = 60
    cross_track_sigma_km: float = 1.0
    speed_sigma_kn: float = 0.5


@dataclass
class ModelSettings:
    conv_filters: tuple[int, ...] = (256, 256, 128)
    conv_kernels: tuple[int, ...] = (7, 5, 5)
    dilation: int = 2
    pool_h: int = 2
    dropout: float = 0.10
    lstm_units: int = 128
    attention_omega: float = 0.25
    dense_units: tuple[int, ...] = (128, 128, 64)
    l2: float = 0.0005
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 100
    patience: int = 10
    batch_size: int = 32


@dataclass
class Paths:
    input_csv: str | None = None  # None: use the synth-stage artifact
    ports_csv: str | None = None
    routes_geojson: str | None = None  # None: use the synth-stage artifact
    out_dir: str = "out"


@dataclass
class PipelineConfig:
    seed: int = 7
    feature_set: str = "trigonometric"
    ablation: str = "c1"
    augment: bool = True
    speed_cap_kn: float = 30.0
    grid: GridConfig = field(default_factory=GridConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    split: SplitConfig = field(default_factory=SplitConfig)
    windows: WindowConfig = field(default_factory=WindowConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelSettings = field(default_factory=ModelSettings)
    paths: Paths = field(default_factory=Paths)

    def __post_init__(self) -> None:
        if self.feature_set not in FEATURE_SETS:
            raise ValueError(f"unknown feature set {self.feature_set!r}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        for name in ("gap_hours", "gap_km", "port_radius_km", "turn_limit_gradian"):
            if getattr(self.thresholds, name) <= 0:
                raise ValueError(f"threshold {name} must be positive")

    # -- loading ---------------------------------------------------------------

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            raw = json.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        kw = dict(raw)
        sections = {
            "grid": GridConfig,
            "thresholds": Thresholds,
            "split": SplitConfig,
            "windows": WindowConfig,
            "synth": SynthConfig,
            "model": ModelSettings,
            "paths": Paths,
        }
        for key, typ in sections.items():
            if key in kw and isinstance(kw[key], dict):
                sub = dict(kw[key])
                for tup_key in ("conv_filters", "conv_kernels", "dense_units"):
                    if tup_key in sub:
                        sub[tup_key] = tuple(sub[tup_key])
                kw[key] = typ(**sub)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("conv_filters", "conv_kernels", "dense_units"):
            d["model"][key] = list(d["model"][key])
        return d

    # -- hashing and artifact naming --------------------------------------------

    def stage_hash(self, stage: str) -> str:
        if stage not in _STAGE_SECTIONS:
            raise ValueError(f"unknown stage {stage!r}")
        full = self.to_dict()
        full.pop("paths")  # filesystem layout never affects artifact content
        subset = {k: full[k] for k in _STAGE_SECTIONS[stage]}
        canon = json.dumps(subset, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def artifact_paths(self, stage: str, out_dir=None) -> list[Path]:
        out = Path(out_dir if out_dir is not None else self.paths.out_dir)
        h = self.stage_hash(stage)
        return [out / name.format(h=h) for name in _STAGE_FILES[stage]]

    def artifact(self, stage: str, suffix: str, out_dir=None) -> Path:
        for p in self.artifact_paths(stage, out_dir):
            if p.name.endswith(suffix):
                return p
        raise KeyError(f"stage {stage} has no artifact ending in {suffix}")


class MissingArtifact(FileNotFoundError):
    """A required upstream artifact is absent for the current configuration."""


def require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifact(
            f"missing {path.name}: run the {stage!r} stage with this configuration first"
        )
    return path
