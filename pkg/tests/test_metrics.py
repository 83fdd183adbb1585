"""Metric definitions against hand-computed fixtures."""
import math

import numpy as np
import pytest

from voyagecast.metrics import (
    ErrorReport,
    haversine_error_report,
    haversine_errors_km,
    regression_metrics,
    report_markdown,
    weighted_prf1,
)


def test_prf1_perfect():
    assert weighted_prf1([1, 2, 1], [1, 2, 1]) == (1.0, 1.0, 1.0)


def test_prf1_all_wrong_binary():
    assert weighted_prf1([0, 1, 0, 1], [1, 0, 1, 0]) == (0.0, 0.0, 0.0)


def test_prf1_three_class_hand_fixture():
    # confusion: truth a: [a,a,b], truth b: [b,c], truth c: [c]
    truth = ["a", "a", "a", "b", "b", "c"]
    pred = ["a", "a", "b", "b", "c", "c"]
    # class a: tp=2 fp=0 fn=1 -> P=1, R=2/3, F1=0.8, support 3
    # class b: tp=1 fp=1 fn=1 -> P=0.5, R=0.5, F1=0.5, support 2
    # class c: tp=1 fp=1 fn=0 -> P=0.5, R=1, F1=2/3, support 1
    p, r, f = weighted_prf1(truth, pred)
    assert p == pytest.approx((3 * 1.0 + 2 * 0.5 + 1 * 0.5) / 6)
    assert r == pytest.approx((3 * (2 / 3) + 2 * 0.5 + 1 * 1.0) / 6)
    assert f == pytest.approx((3 * 0.8 + 2 * 0.5 + 1 * (2 / 3)) / 6)


def test_prf1_rejects_empty_and_mismatch():
    with pytest.raises(ValueError):
        weighted_prf1([], [])
    with pytest.raises(ValueError):
        weighted_prf1([1], [1, 2])


def test_prf1_weighted_equals_macro_when_balanced():
    truth = [0, 0, 1, 1, 2, 2]
    pred = [0, 1, 1, 1, 2, 0]
    w = weighted_prf1(truth, pred)
    # macro by hand with equal supports
    classes = [0, 1, 2]
    per = []
    for c in classes:
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(truth, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(truth, pred) if t == c and p != c)
        pc = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        fc = 2 * pc * rc / (pc + rc) if pc + rc else 0.0
        per.append((pc, rc, fc))
    macro = tuple(sum(x[i] for x in per) / 3 for i in range(3))
    assert w == pytest.approx(macro)


def test_regression_metrics_perfect_and_mean():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    assert regression_metrics(t, t) == (0.0, 0.0, 1.0)
    mean_pred = np.full_like(t, t.mean())
    mae, mse, r2 = regression_metrics(t, mean_pred)
    assert r2 == 0.0
    assert mae == pytest.approx(1.0)
    assert mse == pytest.approx(1.25)


def test_regression_metrics_hand_sums():
    t = np.array([[0.0, 1.0], [2.0, 3.0]])
    p = np.array([[0.5, 1.0], [1.5, 4.0]])
    mae, mse, r2 = regression_metrics(t, p)
    assert mae == pytest.approx((0.5 + 0 + 0.5 + 1.0) / 4)
    assert mse == pytest.approx((0.25 + 0 + 0.25 + 1.0) / 4)
    # per-column r2 averaged
    r2a = 1 - (0.25 + 0.25) / (1.0 + 1.0)
    r2b = 1 - (0.0 + 1.0) / (1.0 + 1.0)
    assert r2 == pytest.approx((r2a + r2b) / 2)


def test_haversine_report_identical_zero():
    pts = np.array([[45.0, -61.0], [46.0, -60.0]])
    rep = haversine_error_report(pts, pts)
    assert rep.mean_km == rep.p50_km == rep.std_km == 0.0
    assert rep.r2 == 1.0


def test_haversine_report_constant_lon_offset():
    truth = np.array([[0.0, lon] for lon in np.linspace(10, 11, 8)])
    pred = truth + np.array([0.0, 0.1])
    rep = haversine_error_report(truth, pred)
    want = 6371.0 * math.radians(0.1)
    assert rep.mean_km == pytest.approx(want, abs=1e-6)
    assert rep.std_km == pytest.approx(0.0, abs=1e-9)
    assert rep.p25_km == pytest.approx(want, abs=1e-6)


def test_percentiles_match_sorted_hand_check():
    truth = np.array([[0.0, 0.0]] * 5)
    offs = [0.0, 0.1, 0.2, 0.3, 0.4]
    pred = np.array([[0.0, o] for o in offs])
    rep = haversine_error_report(truth, pred)
    km = [6371.0 * math.radians(o) for o in offs]
    assert rep.p25_km == pytest.approx(km[1], abs=1e-9)  # linear interp lands on order stats
    assert rep.p50_km == pytest.approx(km[2], abs=1e-9)
    assert rep.p75_km == pytest.approx(km[3], abs=1e-9)
    assert rep.p25_km <= rep.p50_km <= rep.p75_km <= max(rep.errors_km)


def test_haversine_errors_rejects_empty():
    with pytest.raises(ValueError):
        haversine_errors_km(np.zeros((0, 2)), np.zeros((0, 2)))


def test_report_markdown_layout():
    rep = ErrorReport(0.98, 0.07, 0.02, 12.5, 3.0, 6.6, 13.9, 23.4, [1.0])
    text = report_markdown([("demo", rep)])
    lines = text.splitlines()
    assert lines[0].startswith("| Variant | R2 Score | MAE | MSE | Mean Err.")
    assert "98.00%" in lines[2]
    assert text.endswith("\n")


def test_report_json_fields():
    rep = ErrorReport(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, [0.0, 0.0])
    d = rep.to_dict()
    assert d["count"] == 2
    assert set(d) == {"r2", "mae", "mse", "mean_km", "p25_km", "p50_km", "p75_km", "std_km", "count"}
