"""MOTA for tracker output against annotated tracks.

Matching per frame follows the usual CLEAR-MOT order: pairings carried over
from earlier frames are kept while they still clear the IoU gate, then the
remaining objects are paired greedily by descending IoU.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .geometry import BoundingBox, iou

MOTA_IOU = 0.5


@dataclass(frozen=True)
class TrackFrame:
    frame_index: int
    ground_truths: tuple[tuple[int, BoundingBox], ...]
    predictions: tuple[tuple[int, BoundingBox], ...]

    def __post_init__(self) -> None:
        for name, items in (("ground truth", self.ground_truths), ("prediction", self.predictions)):
            ids = [i for i, _ in items]
            if len(set(ids)) != len(ids):
                raise ValueError(f"frame {self.frame_index}: duplicate {name} track id")


@dataclass(frozen=True)
class MotaReport:
    frames: int
    gt_count: int
    predictions: int
    matches: int
    mismatches: int
    false_positives: int
    false_negatives: int
    iou_threshold: float | None
    mota: float

    kind = "mota"

    # row label, attribute
    LABELS = (
        ("Number of Frames", "frames"),
        ("Bush Annotations", "gt_count"),
        ("Predictions", "predictions"),
        ("Mismatch Errors", "mismatches"),
        ("False Positives", "false_positives"),
        ("False Negatives", "false_negatives"),
        ("IOU Threshold", "iou_threshold"),
        ("MOTA", "mota"),
    )

    def columns(self) -> list[str]:
        return ["parameter", "value"]

    def records(self) -> list[dict]:
        return [{"parameter": label, "value": getattr(self, attr)} for label, attr in self.LABELS]


def mota_from_counts(gt: int, fp: int, fn: int, idsw: int) -> float:
    if gt <= 0:
        raise ValueError("MOTA is undefined without ground-truth objects")
    return 1.0 - (fn + fp + idsw) / gt


def report_from_counts(
    gt: int, fp: int, fn: int, idsw: int, frames: int = 0, predictions: int | None = None,
    iou_threshold: float | None = None,
) -> MotaReport:
    matches = gt - fn
    if predictions is None:
        predictions = matches + fp
    return MotaReport(frames, gt, predictions, matches, idsw, fp, fn, iou_threshold, mota_from_counts(gt, fp, fn, idsw))


def evaluate_tracking(frames: Iterable[TrackFrame], iou_threshold: float = MOTA_IOU) -> MotaReport:
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to evaluate")
    last_pair: dict[int, int] = {}  # gt id -> pred id of its latest match
    n_gt = n_pred = n_match = fp = fn = idsw = 0
    prev_index = None
    for fr in frames:
        if prev_index is not None and fr.frame_index <= prev_index:
            raise ValueError(f"frames out of order at index {fr.frame_index}")
        prev_index = fr.frame_index
        gts = dict(fr.ground_truths)
        preds = dict(fr.predictions)
        pairs: dict[int, int] = {}

        # a prediction id can be the latest partner of several gt ids; first wins
        taken: set[int] = set()
        for g, p in last_pair.items():
            if g in gts and p in preds and p not in taken and iou(gts[g], preds[p]) >= iou_threshold:
                pairs[g] = p
                taken.add(p)

        free_p = set(preds) - taken
        cands = []
        for g, gbox in gts.items():
            if g in pairs:
                continue
            for p in free_p:
                v = iou(gbox, preds[p])
                if v >= iou_threshold:
                    cands.append((-v, g, p))
        cands.sort()
        used_g, used_p = set(pairs), set(pairs.values())
        for _, g, p in cands:
            if g in used_g or p in used_p:
                continue
            used_g.add(g)
            used_p.add(p)
            pairs[g] = p

        for g, p in pairs.items():
            if g in last_pair and last_pair[g] != p:
                idsw += 1
            last_pair[g] = p
        n_gt += len(gts)
        n_pred += len(preds)
        n_match += len(pairs)
        fn += len(gts) - len(pairs)
        fp += len(preds) - len(pairs)
    if n_gt == 0:
        raise ValueError("no ground-truth objects in any frame")
    return MotaReport(
        len(frames), n_gt, n_pred, n_match, idsw, fp, fn, iou_threshold, mota_from_counts(n_gt, fp, fn, idsw)
    )


def _track_list(items) -> tuple[tuple[int, BoundingBox], ...]:
    return tuple((int(i), BoundingBox(*map(float, box))) for i, *box in items)


def load_frames(path: Path | str) -> list[TrackFrame]:
    """Read a JSON Lines frame file.

    Each line: ``{"frame": 3, "gt": [[id, x0, y0, x1, y1], ...], "pred": [...]}``
    with absolute pixel corners.
    """
    frames = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
                frames.append(
                    TrackFrame(int(rec["frame"]), _track_list(rec.get("gt", [])), _track_list(rec.get("pred", [])))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad frame record: {exc}") from None
    return frames


def dump_frames(frames: Iterable[TrackFrame], path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for fr in frames:
            rec = {
                "frame": fr.frame_index,
                "gt": [[i, *b.as_tuple()] for i, b in fr.ground_truths],
                "pred": [[i, *b.as_tuple()] for i, b in fr.predictions],
            }
            fh.write(json.dumps(rec) + "\n")
