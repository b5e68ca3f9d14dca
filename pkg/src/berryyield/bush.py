"""Foreground bush selection and per-bush berry counting.

Berries belong to a bush when their box center falls inside the bush box
(half-open). Cropping is done in coordinate space: items are translated into
the crop frame and clipped to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, TypeVar

from .evaluation import CLASSES, MatchConfig, PrecisionRecall, match, precision_recall
from .geometry import BoundingBox, Point2D, area, center, contains_point, distance
from .io import Detection, GroundTruth, ImageRecord

T = TypeVar("T", GroundTruth, Detection)

CROP = "crop"
BBOX_FILTER = "bbox_filter"


class NoBushError(ValueError):
    pass


@dataclass(frozen=True)
class BushSelection:
    image_id: str
    central_box: BoundingBox
    radial_distance: float
    candidates_considered: int
    index: int = 0


@dataclass(frozen=True)
class BushBerryCount:
    image_id: str
    method: str
    detections_in_bush: int
    visual_gt_in_bush: int
    per_class: dict[int, tuple[int, int]] = field(default_factory=dict)  # cls -> (detections, gts)


def select_central_bush(
    bush_boxes: Sequence[Detection], width: int, height: int, image_id: str = ""
) -> BushSelection:
    """Pick the bush whose center is nearest the image center.

    Ties go to the larger box, then the earlier one.
    """
    if not bush_boxes:
        raise NoBushError(f"no bush boxes for image {image_id!r}")
    mid = Point2D(width / 2, height / 2)
    keyed = [(distance(center(b.box), mid), -area(b.box), i) for i, b in enumerate(bush_boxes)]
    dist, _, i = min(keyed)
    return BushSelection(image_id, bush_boxes[i].box, dist, len(bush_boxes), i)


def in_box(box: BoundingBox, items: Sequence[T]) -> list[T]:
    return [it for it in items if contains_point(box, center(it.box))]


def crop_frame_transform(central: BoundingBox, items: Sequence[T]) -> list[T]:
    """Keep center-contained items, moved into crop-local pixels and clipped to the crop."""
    out = []
    w, h = central.width, central.height
    for it in in_box(central, items):
        local = it.box.translate(-central.x_min, -central.y_min).clip(0.0, 0.0, w, h)
        out.append(replace(it, box=local))
    return out


def _per_class(dets: Sequence[Detection], gts: Sequence[GroundTruth]) -> dict[int, tuple[int, int]]:
    return {
        c: (sum(1 for d in dets if d.cls == c), sum(1 for g in gts if g.cls == c)) for c in CLASSES
    }


@dataclass(frozen=True)
class CropEvaluation:
    count: BushBerryCount
    metrics: PrecisionRecall


def count_berries_crop(
    record: ImageRecord,
    selection: BushSelection,
    cfg: MatchConfig = MatchConfig(),
    crop_detections: Sequence[Detection] | None = None,
) -> CropEvaluation:
    """Count and score berries on the selected bush in the crop frame.

    ``crop_detections`` are detections a detector produced on the cropped
    image, already in crop-local pixels. When omitted, the record's
    full-frame detections are moved into the crop frame instead. Detections
    under the confidence threshold are not counted.
    """
    gts = crop_frame_transform(selection.central_box, record.ground_truths)
    if crop_detections is None:
        dets = crop_frame_transform(selection.central_box, record.detections)
    else:
        extent = BoundingBox(0.0, 0.0, selection.central_box.width, selection.central_box.height)
        dets = crop_frame_transform(extent, crop_detections)
    dets = [d for d in dets if d.confidence >= cfg.confidence_threshold]
    metrics = precision_recall(match(gts, dets, cfg))
    count = BushBerryCount(record.image_id, CROP, len(dets), len(gts), _per_class(dets, gts))
    return CropEvaluation(count, metrics)


def count_berries_bbox_filter(
    record: ImageRecord, selection: BushSelection, confidence_threshold: float = MatchConfig().confidence_threshold
) -> BushBerryCount:
    box = selection.central_box
    dets = [d for d in in_box(box, record.detections) if d.confidence >= confidence_threshold]
    gts = in_box(box, record.ground_truths)
    return BushBerryCount(record.image_id, BBOX_FILTER, len(dets), len(gts), _per_class(dets, gts))


@dataclass(frozen=True)
class CropRectangles:
    """Crop rectangles per image, for external detector runners."""

    selections: tuple[BushSelection, ...]

    kind = "crop_rectangles"

    def columns(self) -> list[str]:
        return ["image_id", "x_min", "y_min", "x_max", "y_max", "radial_distance", "candidates"]

    def records(self) -> list[dict]:
        return [
            {
                "image_id": s.image_id,
                "x_min": s.central_box.x_min,
                "y_min": s.central_box.y_min,
                "x_max": s.central_box.x_max,
                "y_max": s.central_box.y_max,
                "radial_distance": s.radial_distance,
                "candidates": s.candidates_considered,
            }
            for s in self.selections
        ]


@dataclass(frozen=True)
class BushCountTable:
    counts: tuple[BushBerryCount, ...]

    kind = "bush_berry_counts"

    def columns(self) -> list[str]:
        return [
            "image_id", "method", "detections_in_bush", "visual_gt_in_bush",
            "detections_green", "gt_green", "detections_blue", "gt_blue",
        ]

    def records(self) -> list[dict]:
        rows = []
        for c in self.counts:
            g = c.per_class.get(0, (0, 0))
            b = c.per_class.get(1, (0, 0))
            rows.append({
                "image_id": c.image_id,
                "method": c.method,
                "detections_in_bush": c.detections_in_bush,
                "visual_gt_in_bush": c.visual_gt_in_bush,
                "detections_green": g[0],
                "gt_green": g[1],
                "detections_blue": b[0],
                "gt_blue": b[1],
            })
        return rows
