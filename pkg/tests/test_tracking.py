import json
import random

import pytest

from berryyield.geometry import BoundingBox
from berryyield.tracking import (
    TrackFrame,
    dump_frames,
    evaluate_tracking,
    load_frames,
    mota_from_counts,
    report_from_counts,
)

from synth import tracking_stream

BOX = BoundingBox(10, 10, 60, 60)


def test_mota_from_counts_table_rows():
    assert mota_from_counts(6464, 2315, 1745, 149) == pytest.approx(1 - 4209 / 6464)
    assert mota_from_counts(6464, 2315, 1745, 149) == pytest.approx(0.3489, abs=5e-5)
    assert mota_from_counts(324, 96, 66, 7) == pytest.approx(1 - 169 / 324)
    assert mota_from_counts(10, 0, 0, 0) == 1.0
    with pytest.raises(ValueError):
        mota_from_counts(0, 1, 0, 0)


def test_perfect_tracking():
    frames = [TrackFrame(i, ((1, BOX),), ((7, BOX),)) for i in range(10)]
    r = evaluate_tracking(frames)
    assert (r.mota, r.mismatches) == (1.0, 0)


def test_one_id_change():
    frames = [TrackFrame(i, ((1, BOX),), ((7 if i < 5 else 8, BOX),)) for i in range(10)]
    r = evaluate_tracking(frames)
    assert r.mismatches == 1
    assert r.mota == pytest.approx(0.9)


def test_uncovered_track():
    other = BoundingBox(200, 10, 260, 60)
    frames = [TrackFrame(i, ((1, BOX), (2, other)), ((7, BOX),)) for i in range(5)]
    r = evaluate_tracking(frames)
    assert r.false_negatives == 5
    assert r.mota == 0.5


def test_mota_can_go_negative():
    far = [(100 + k, BoundingBox(500 + 70 * k, 0, 550 + 70 * k, 50)) for k in range(3)]
    frames = [TrackFrame(i, ((1, BOX),), ((7, BOX), *far)) for i in range(4)]
    r = evaluate_tracking(frames)
    assert r.false_positives == 12 and r.gt_count == 4
    assert r.mota == 1 - 12 / 4


def test_continuation_beats_better_iou():
    # prediction 7 keeps its gt even when prediction 8 overlaps more
    shifted = BoundingBox(15, 10, 65, 60)
    frames = [
        TrackFrame(0, ((1, BOX),), ((7, BOX),)),
        TrackFrame(1, ((1, BOX),), ((7, shifted), (8, BOX))),
    ]
    r = evaluate_tracking(frames)
    assert r.mismatches == 0 and r.false_positives == 1


def test_per_frame_identities():
    rng = random.Random(3)
    frames = tracking_stream(rng, 20, 3, 5, 4, 2)
    for fr in frames:
        r = evaluate_tracking([fr])
        assert r.matches + r.false_negatives == len(fr.ground_truths)
        assert r.matches + r.false_positives == len(fr.predictions)


def test_injected_counts_are_recovered():
    rng = random.Random(4)
    for _ in range(10):
        k, m, s = rng.randint(0, 8), rng.randint(0, 8), rng.randint(0, 4)
        r = evaluate_tracking(tracking_stream(rng, 25, 3, k, m, s))
        assert (r.false_positives, r.false_negatives, r.mismatches) == (k, m, s)


def test_errors():
    with pytest.raises(ValueError):
        evaluate_tracking([])
    with pytest.raises(ValueError):
        TrackFrame(0, ((1, BOX), (1, BOX)), ())
    with pytest.raises(ValueError):
        evaluate_tracking([TrackFrame(2, ((1, BOX),), ()), TrackFrame(1, ((1, BOX),), ())])


def test_frame_file_round_trip(tmp_path):
    frames = tracking_stream(random.Random(1), 5, 2, 1, 1, 1)
    dump_frames(frames, tmp_path / "v.frames")
    assert load_frames(tmp_path / "v.frames") == frames
    (tmp_path / "bad.frames").write_text(json.dumps({"gt": []}) + "\n")
    with pytest.raises(ValueError, match="bad.frames:1"):
        load_frames(tmp_path / "bad.frames")


def test_report_rows_mirror_table_labels():
    r = report_from_counts(6464, 2315, 1745, 149, frames=365, predictions=7104, iou_threshold=0.5)
    labels = [row["parameter"] for row in r.records()]
    assert labels == [
        "Number of Frames", "Bush Annotations", "Predictions", "Mismatch Errors",
        "False Positives", "False Negatives", "IOU Threshold", "MOTA",
    ]
