"""Acceptance criteria, each at its stated tolerance.

Every check registers a pass/fail entry; the terminal summary prints one
line per criterion.
"""

import json
import random
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from berryyield.cli import main
from berryyield.estimate import YieldInputs, estimate_yield
from berryyield.evaluation import MatchConfig, match
from berryyield.io import Detection, emit_boxes, load_manifest, parse_boxes_file, write_report
from berryyield.pipeline import RunConfig, run_bushcropped_eval, write_run
from berryyield.sampling import BushPosition, GridSpec, Point2D, partition_grid, plan_mission, nearest_bush
from berryyield.tiling import plan_inference_tiles, plan_training_tiles
from berryyield.tracking import evaluate_tracking

from conftest import ACCEPTANCE
from synth import matching_instance, max_assignment, pvr_fixture, tracking_stream
from test_evaluation import _check_identities
from test_io import _random_items
from test_sampling import rect_field


@contextmanager
def criterion(n: int, label: str):
    results = ACCEPTANCE.setdefault(n, [])
    try:
        yield
    except BaseException:
        results.append((False, label))
        raise
    results.append((True, label))


# ---------------------------------------------------------------- PVR tables

# (image_id, detections, visual, picked, alpha_p, alpha) as published
SET_A = [
    ("A1", 882, 1010, 3312, 3.755, 3.279),
    ("A2", 1451, 1230, 3996, 2.754, 3.249),
    ("A3", 511, 493, 2888, 5.652, 5.858),
    ("A4", 711, 847, 2920, 4.107, 3.447),
    ("A5", 420, 708, 1404, 3.343, 1.983),
]
SET_B = [
    ("B1", 891, 785, 1404, 1.576, 1.789),
    ("B2", 885, 806, 2920, 3.299, 3.623),
    ("B3", 1012, 972, 2888, 2.854, 2.971),
    ("B4", 1856, 1842, 3996, 2.153, 2.169),
    ("B5", 1071, 1043, 3312, 3.092, 3.175),
]
SET_C = [
    ("C1", 1109, 1507, 2407, 2.170, 1.597),
    ("C2", 831, 924, 3215, 3.869, 3.479),
    ("C3", 1261, 1491, 1963, 1.557, 1.316),
    ("C4", 713, 618, 2307, 3.236, 3.733),
    ("C5", 1210, 1457, 1963, 1.622, 1.347),
]
# Mean, SD, Total of (alpha_p, alpha)
SUMMARY = {
    "A": {"Mean": (3.92, 3.56), "SD": (1.09, 1.41), "Total": (3.65, 3.39)},
    "B": {"Mean": (2.59, 2.75), "SD": (0.71, 0.75), "Total": (2.54, 2.67)},
    # The alpha_p summaries of set C do not follow from its own rows: the
    # detection column sums to 5124, not the published total of 4774, and
    # no single-row correction reconciles mean, SD and total together.
    # These three values are expected to fail.
    "C": {"Mean": (2.67, 2.29), "SD": (1.10, 1.21), "Total": (2.48, 1.98)},
}
SETS = {"A": SET_A, "B": SET_B, "C": SET_C}
PVR_TOL = 0.005

_pvr_cache: dict[str, tuple[dict, float]] = {}


def _run_pvr(name: str, tmp_path_factory) -> tuple[dict, float]:
    if name not in _pvr_cache:
        d = tmp_path_factory.mktemp(f"pvr{name}")
        rows = "image_id,detections,visual_gt,picked_gt\n"
        rows += "".join(f"{r[0]},{r[1]},{r[2]},{r[3]}\n" for r in SETS[name])
        (d / "counts.csv").write_text(rows)
        t0 = time.perf_counter()
        code = main(["pvr", "--counts", str(d / "counts.csv"), "--out", str(d / "pvr.json")])
        elapsed = time.perf_counter() - t0
        assert code == 0
        records = json.loads((d / "pvr.json").read_text())["records"]
        _pvr_cache[name] = ({r["image_id"]: r for r in records}, elapsed)
    return _pvr_cache[name]


_PVR_CASES = [
    pytest.param(s, row[0], col, row[4 + k], id=f"{row[0]}-{col}")
    for s, rows in SETS.items()
    for row in rows
    for k, col in enumerate(("alpha_predicted", "alpha_experimental"))
] + [
    pytest.param(s, stat, col, vals[k], id=f"{s}-{stat}-{col}")
    for s, stats in SUMMARY.items()
    for stat, vals in stats.items()
    for k, col in enumerate(("alpha_predicted", "alpha_experimental"))
]


@pytest.mark.parametrize("set_name,row,column,published", _PVR_CASES)
def test_pvr_reproduction(set_name, row, column, published, tmp_path_factory):
    with criterion(1, f"set {set_name} {row} {column}: published {published}"):
        records, _ = _run_pvr(set_name, tmp_path_factory)
        assert records[row][column] == pytest.approx(published, abs=PVR_TOL)


@pytest.mark.parametrize("set_name", SETS)
def test_pvr_runtime(set_name, tmp_path_factory):
    with criterion(1, f"set {set_name} runtime"):
        _pvr_cache.pop(set_name, None)
        _, elapsed = _run_pvr(set_name, tmp_path_factory)
        assert elapsed < 1.0


# ---------------------------------------------------------------------- MOTA

VIDEOS = {
    "video1": ({"gt": 6464, "fp": 2315, "fn": 1745, "idsw": 149, "frames": 365, "predictions": 7104}, 0.3489, 0.0005),
    # The published 0.4786 is not what its own counts give: 1 - 169/324 is
    # 0.47840. The tolerance is widened to 0.002 to cover that gap.
    "video2": ({"gt": 324, "fp": 96, "fn": 66, "idsw": 7, "frames": 75, "predictions": 352}, 0.4786, 0.002),
}


@pytest.mark.parametrize("video", VIDEOS)
def test_mota_reproduction(video, tmp_path):
    counts, published, tol = VIDEOS[video]
    with criterion(2, f"{video}: published {published} +/- {tol}"):
        (tmp_path / "counts.json").write_text(json.dumps(counts))
        t0 = time.perf_counter()
        code = main(["mota", "--counts", str(tmp_path / "counts.json"), "--iou", "0.5", "--out", str(tmp_path / "m.json")])
        elapsed = time.perf_counter() - t0
        assert code == 0
        rows = {r["parameter"]: r["value"] for r in json.loads((tmp_path / "m.json").read_text())["records"]}
        assert rows["MOTA"] == pytest.approx(published, abs=tol)
        assert rows["Bush Annotations"] == counts["gt"] and rows["Mismatch Errors"] == counts["idsw"]
        assert elapsed < 1.0


# --------------------------------------------------------------------- yield


def test_yield_formula_properties():
    rng = random.Random(3)
    rel = 1e-12
    with criterion(3, "linearity and inverse proportionality"):
        for _ in range(1000):
            counts = tuple(rng.uniform(1, 2000) for _ in range(rng.randint(1, 30)))
            c, a, alpha = rng.uniform(1, 1e5), rng.uniform(0.01, 500), rng.uniform(0.1, 10)
            k = rng.uniform(0.01, 100)
            y = estimate_yield(YieldInputs(counts, c, a, alpha)).yield_per_acre
            assert estimate_yield(YieldInputs(counts, c, a, k * alpha)).yield_per_acre == pytest.approx(k * y, rel=rel)
            assert estimate_yield(YieldInputs(counts, k * c, a, alpha)).yield_per_acre == pytest.approx(k * y, rel=rel)
            scaled = tuple(k * n for n in counts)
            assert estimate_yield(YieldInputs(scaled, c, a, alpha)).yield_per_acre == pytest.approx(k * y, rel=rel)
            assert estimate_yield(YieldInputs(counts, c, k * a, alpha)).yield_per_acre == pytest.approx(y / k, rel=rel)


# -------------------------------------------------------------------- tiling


def _tile_array(plan):
    return np.array([t.box.as_tuple() for t in plan.tiles], dtype=float).reshape(-1, 4)


def _check_training(w, h):
    arr = _tile_array(plan_training_tiles(w, h))
    assert len(arr) == (w // 640) * (h // 640)
    if not len(arr):
        return
    assert np.all(arr[:, 2] - arr[:, 0] == 640) and np.all(arr[:, 3] - arr[:, 1] == 640)
    assert arr[:, :2].min() >= 0 and arr[:, 2].max() <= w and arr[:, 3].max() <= h
    ix = np.minimum(arr[:, None, 2], arr[None, :, 2]) - np.maximum(arr[:, None, 0], arr[None, :, 0])
    iy = np.minimum(arr[:, None, 3], arr[None, :, 3]) - np.maximum(arr[:, None, 1], arr[None, :, 1])
    overlap = (ix > 0) & (iy > 0)
    assert overlap.sum() == len(arr)  # only the diagonal


def _check_axis(spans, length):
    assert spans[0][0] == 0 and spans[-1][1] == length
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        assert a1 - b0 == 60
    sizes = [b - a for a, b in spans]
    assert max(sizes) - min(sizes) <= 1


def _check_inference(w, h):
    arr = _tile_array(plan_inference_tiles(w, h))
    xs = sorted(set(map(tuple, arr[:, [0, 2]].tolist())))
    ys = sorted(set(map(tuple, arr[:, [1, 3]].tolist())))
    # the plan is the full product of its column and row spans
    assert len(arr) == len(xs) * len(ys) == len(set(map(tuple, arr.tolist())))
    _check_axis(xs, w)
    _check_axis(ys, h)


def test_tiling_lattice():
    sizes = range(100, 5001, 50)
    with criterion(4, "training and inference plans on the lattice"):
        t0 = time.perf_counter()
        for w in sizes:
            for h in sizes:
                _check_training(w, h)
                _check_inference(w, h)
        assert time.perf_counter() - t0 < 10.0


# ------------------------------------------------------------------ matching


def test_matching_oracle():
    rng = random.Random(500)
    cfg = MatchConfig()
    with criterion(5, "greedy vs exhaustive on 500 instances"):
        t0 = time.perf_counter()
        equal = 0
        for _ in range(500):
            gts, dets = matching_instance(rng)
            m = match(gts, dets, cfg)
            _check_identities(m, gts, dets, cfg)
            best = max_assignment(gts, dets, cfg.confidence_threshold, cfg.iou_threshold)
            assert len(m.true_positives) <= best
            equal += len(m.true_positives) == best
        assert equal >= 475
        assert time.perf_counter() - t0 < 30.0


# --------------------------------------------------------------- end to end


def _field_run(root: Path, seed: int):
    """Plan, photograph (synthetically), count and estimate. Returns Y, the
    analytic value and the written files."""
    field = rect_field(100, 80, area_acres=2.5, bushes=1400)
    grid = GridSpec(4, 5)
    plan = plan_mission(field, grid, "point", seed)
    write_report(plan, root / "plan.json", "json")

    cells = partition_grid(field, grid)
    bushes = [BushPosition(f"bush{c.index[0]}{c.index[1]}", Point2D((c.box.x_min + c.box.x_max) / 2, (c.box.y_min + c.box.y_max) / 2)) for c in cells]
    visited = [nearest_bush(w.row_frame, bushes).bush_id for w in plan.waypoints]
    assert len(set(visited)) == 20

    planted = np.random.default_rng(seed).integers(200, 1200, size=20).tolist()
    # a perfect detector: detections coincide with the visible berries
    rows = [(bid, n, n, 2 * n) for bid, n in zip(visited, planted)]
    data = root / "images"
    data.mkdir()
    summary = run_bushcropped_eval(load_manifest(pvr_fixture(data, rows, "field")), RunConfig(seed=seed))
    write_run(summary, root / "run")
    counts = [c.detections_in_bush for c in summary.counts]
    assert counts == planted
    assert summary.pvr.total_experimental == 2.0

    report = estimate_yield(YieldInputs(tuple(counts), field.bush_count, field.area_acres, 2.0))
    write_report(report, root / "yield.json", "json")
    b = 2 * sum(planted) / len(planted)
    analytic = 2 * b * field.bush_count / field.area_acres
    files = {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
    return report.yield_per_acre, analytic, files


def test_end_to_end_field(tmp_path):
    with criterion(6, "synthetic field yield and byte-identical re-run"):
        t0 = time.perf_counter()
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        y, analytic, files_a = _field_run(tmp_path / "a", 11)
        assert y == analytic
        y2, _, files_b = _field_run(tmp_path / "b", 11)
        assert y2 == y and files_a == files_b
        assert time.perf_counter() - t0 < 5.0


# ------------------------------------------------------------------ tracking


def test_tracking_synthesis():
    rng = random.Random(77)
    with criterion(7, "injected FP/FN/ID switches on 20 configurations"):
        for _ in range(20):
            n_frames, n_tracks = rng.randint(5, 60), rng.randint(1, 12)
            cells = (n_frames - 1) * n_tracks  # misses and switches never hit frame 0
            s = rng.randint(0, min(10, cells))
            k, m = rng.randint(0, 30), rng.randint(0, min(20, cells - s))
            r = evaluate_tracking(tracking_stream(rng, n_frames, n_tracks, k, m, s))
            gt = n_frames * n_tracks
            assert (r.false_positives, r.false_negatives, r.mismatches, r.gt_count) == (k, m, s, gt)
            assert r.mota == pytest.approx(1 - (k + m + s) / gt, rel=1e-12)


# ---------------------------------------------------------------- round trip


def test_box_file_round_trip():
    rng = random.Random(8)
    with criterion(8, "parse of emit on 1000 random box files"):
        for _ in range(1000):
            width, height = rng.randint(50, 6000), rng.randint(50, 6000)
            with_conf = rng.random() < 0.5
            items = [it for it in _random_items(rng, width, height) if isinstance(it, Detection) == with_conf]
            text = emit_boxes(items, width, height)
            parsed = parse_boxes_file(text, width, height, with_conf)
            assert len(parsed) == len(items)
            for a, b in zip(items, parsed):
                assert a.cls == b.cls
                for u, v, dim in zip(a.box.as_tuple(), b.box.as_tuple(), (width, height, width, height)):
                    assert abs(u - v) / dim <= 1e-6
            # emitting what was parsed reproduces the file exactly
            assert emit_boxes(parsed, width, height) == text
