"""Classification and regression metrics plus haversine error distributions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geo import GeoPoint, haversine_km


def weighted_prf1(truth, pred, classes=None) -> tuple[float, float, float]:
    """Support-weighted precision/recall/F1 over class labels."""
    truth = list(truth)
    pred = list(pred)
    if len(truth) != len(pred):
        raise ValueError("truth/pred length mismatch")
    if not truth:
        raise ValueError("empty input")
    if classes is None:
        classes = sorted(set(truth) | set(pred))
    n = len(truth)
    precision = recall = f1 = 0.0
    for c in classes:
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(truth, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(truth, pred) if t == c and p != c)
        support = tp + fn
        p_c = tp / (tp + fp) if tp + fp else 0.0
        r_c = tp / (tp + fn) if tp + fn else 0.0
        f_c = 2 * p_c * r_c / (p_c + r_c) if p_c + r_c else 0.0
        w = support / n
        precision += w * p_c
        recall += w * r_c
        f1 += w * f_c
    return precision, recall, f1


def regression_metrics(truth, pred) -> tuple[float, float, float]:
    """MAE, MSE, and R^2 (per output column, averaged)."""
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError("shape mismatch")
    if t.size == 0:
        raise ValueError("empty input")
    err = p - t
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err**2))
    if t.ndim == 1:
        cols = [(t, p)]
    else:
        flat_t = t.reshape(-1, t.shape[-1])
        flat_p = p.reshape(-1, p.shape[-1])
        cols = [(flat_t[:, j], flat_p[:, j]) for j in range(t.shape[-1])]
    r2s = []
    for tc, pc in cols:
        ss_res = float(np.sum((tc - pc) ** 2))
        ss_tot = float(np.sum((tc - np.mean(tc)) ** 2))
        if ss_tot == 0.0:
            r2s.append(1.0 if ss_res == 0.0 else 0.0)
        else:
            r2s.append(1.0 - ss_res / ss_tot)
    return mae, mse, float(np.mean(r2s))


@dataclass
class ErrorReport:
    """Forecast quality summary: normalized-space fit plus km error spread."""

    r2: float
    mae: float
    mse: float
    mean_km: float
    p25_km: float
    p50_km: float
    p75_km: float
    std_km: float
    errors_km: list[float] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "r2": self.r2,
            "mae": self.mae,
            "mse": self.mse,
            "mean_km": self.mean_km,
            "p25_km": self.p25_km,
            "p50_km": self.p50_km,
            "p75_km": self.p75_km,
            "std_km": self.std_km,
            "count": len(self.errors_km),
        }


def haversine_errors_km(truth_latlon, pred_latlon) -> np.ndarray:
    """Per-point great-circle error between matched coordinate arrays."""
    t = np.asarray(truth_latlon, dtype=np.float64).reshape(-1, 2)
    p = np.asarray(pred_latlon, dtype=np.float64).reshape(-1, 2)
    if t.shape != p.shape:
        raise ValueError("shape mismatch")
    if len(t) == 0:
        raise ValueError("empty input")
    return np.array(
        [
            haversine_km(GeoPoint(a[0], a[1]), GeoPoint(b[0], b[1]))
            for a, b in zip(t, p)
        ]
    )


def haversine_error_report(
    truth_latlon,
    pred_latlon,
    truth_norm=None,
    pred_norm=None,
) -> ErrorReport:
    """Error distribution over denormalized coordinates.

    Regression metrics are computed over the normalized pairs when provided,
    matching the scale on which the forecaster is optimized; otherwise they
    fall back to the raw coordinates.
    """
    errors = haversine_errors_km(truth_latlon, pred_latlon)
    if truth_norm is None:
        truth_norm, pred_norm = truth_latlon, pred_latlon
    mae, mse, r2 = regression_metrics(truth_norm, pred_norm)
    # linear-interpolation percentile convention
    p25, p50, p75 = (float(np.percentile(errors, q)) for q in (25, 50, 75))
    return ErrorReport(
        r2=r2,
        mae=mae,
        mse=mse,
        mean_km=float(np.mean(errors)),
        p25_km=p25,
        p50_km=p50,
        p75_km=p75,
        std_km=float(np.std(errors)),
        errors_km=errors.tolist(),
    )


def report_markdown(rows: list[tuple[str, ErrorReport]]) -> str:
    """Markdown table with one line per labeled report."""
    header = (
        "| Variant | R2 Score | MAE | MSE | Mean Err. | 25th Pct. | 50th Pct. "
        "| 75th Pct. | Std. Dev. |"
    )
    sep = "|---" * 9 + "|"
    lines = [header, sep]
    for label, r in rows:
        lines.append(
            f"| {label} | {r.r2 * 100:.2f}% | {r.mae:.4f} | {r.mse:.4f} "
            f"| {r.mean_km:.4f} | {r.p25_km:.4f} | {r.p50_km:.4f} "
            f"| {r.p75_km:.4f} | {r.std_km:.4f} |"
        )
    return "\n".join(lines) + "\n"
