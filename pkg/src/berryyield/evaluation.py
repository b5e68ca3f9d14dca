"""Detection to ground-truth matching and precision/recall."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import boxes_array, iou_many
from .io import ClassId, Detection, GroundTruth, ImageRecord
from .tiling import DUP_IOU, INFER_OVERLAP, INFER_TILE, merge_tile_detections, plan_inference_tiles

CLASSES = (ClassId.GREEN, ClassId.BLUE)


@dataclass(frozen=True)
class MatchConfig:
    confidence_threshold: float = 0.1
    iou_threshold: float = 0.3

    def __post_init__(self) -> None:
        for name in ("confidence_threshold", "iou_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one set of detections against ground truths.

    Indices refer to the lists passed to :func:`match`. Detections below the
    confidence threshold appear in none of the lists.
    """

    true_positives: tuple[tuple[int, int, float], ...]
    false_positives: tuple[int, ...]
    false_negatives: tuple[int, ...]
    gt_classes: tuple[int, ...]
    det_classes: tuple[int, ...]

    def counts(self, cls: int | None = None) -> Counts:
        if cls is None:
            return Counts(len(self.true_positives), len(self.false_positives), len(self.false_negatives))
        return Counts(
            sum(1 for g, _, _ in self.true_positives if self.gt_classes[g] == cls),
            sum(1 for d in self.false_positives if self.det_classes[d] == cls),
            sum(1 for g in self.false_negatives if self.gt_classes[g] == cls),
        )


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: Counts) -> Counts:
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return 1.0 if d == 0 else self.tp / d

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return 1.0 if d == 0 else self.tp / d


@dataclass(frozen=True)
class PrecisionRecall:
    """Per-class counts plus the pooled (not macro-averaged) overall counts."""

    per_class: dict[int, Counts] = field(default_factory=lambda: {c: Counts() for c in CLASSES})

    @property
    def overall(self) -> Counts:
        total = Counts()
        for c in self.per_class.values():
            total = total + c
        return total

    def __add__(self, other: PrecisionRecall) -> PrecisionRecall:
        keys = list(dict.fromkeys([*self.per_class, *other.per_class]))
        return PrecisionRecall(
            {k: self.per_class.get(k, Counts()) + other.per_class.get(k, Counts()) for k in keys}
        )

    def row(self) -> dict[str, float | int]:
        out: dict[str, float | int] = {}
        parts = [(ClassId(c).name.lower(), n) for c, n in self.per_class.items()] + [("overall", self.overall)]
        for name, n in parts:
            out[f"tp_{name}"] = n.tp
            out[f"fp_{name}"] = n.fp
            out[f"fn_{name}"] = n.fn
        for name, n in parts:
            out[f"prec_{name}"] = n.precision
            out[f"rec_{name}"] = n.recall
        return out


def match(gts: list[GroundTruth], dets: list[Detection], cfg: MatchConfig = MatchConfig()) -> MatchResult:
    """Greedy per-ground-truth matching.

    Ground truths are visited in input order. Each takes, among unmatched
    same-class detections clearing the IoU gate, the one with the highest
    confidence (ties: higher IoU, then lower index). Detections under the
    confidence threshold are discarded up front and count as nothing.
    """
    kept = [i for i, d in enumerate(dets) if d.confidence >= cfg.confidence_threshold]
    arr = boxes_array([dets[i].box for i in kept])
    conf = np.array([dets[i].confidence for i in kept])
    cls = np.array([int(dets[i].cls) for i in kept], dtype=int)
    free = np.ones(len(kept), dtype=bool)
    tps, fns = [], []
    for g, gt in enumerate(gts):
        ious = iou_many(gt.box, arr)
        ok = free & (cls == int(gt.cls)) & (ious >= cfg.iou_threshold)
        cand = np.nonzero(ok)[0]
        if len(cand) == 0:
            fns.append(g)
            continue
        # lexsort: last key is primary
        best = cand[np.lexsort((cand, -ious[cand], -conf[cand]))[0]]
        free[best] = False
        tps.append((g, kept[best], float(ious[best])))
    fps = [kept[k] for k in np.nonzero(free)[0]]
    return MatchResult(
        tuple(tps),
        tuple(fps),
        tuple(fns),
        tuple(int(g.cls) for g in gts),
        tuple(int(d.cls) for d in dets),
    )


def precision_recall(m: MatchResult) -> PrecisionRecall:
    return PrecisionRecall({c: m.counts(c) for c in CLASSES})


@dataclass(frozen=True)
class ImageEvaluation:
    image_id: str
    metrics: PrecisionRecall
    match: MatchResult


def image_detections(
    record: ImageRecord,
    tiled: bool,
    dup_iou: float = DUP_IOU,
    tile_target: int = INFER_TILE,
    tile_overlap: int = INFER_OVERLAP,
) -> list[Detection]:
    """Full-frame detections for an image, merging per-tile outputs when ``tiled``."""
    if not tiled:
        return list(record.detections)
    if record.tile_detections is None:
        raise ValueError(f"image {record.image_id!r} has no per-tile detections")
    plan = plan_inference_tiles(record.width, record.height, tile_target, tile_overlap, record.image_id)
    return merge_tile_detections({k: list(v) for k, v in record.tile_detections.items()}, plan, dup_iou)


def evaluate_image(
    record: ImageRecord,
    cfg: MatchConfig = MatchConfig(),
    tiled: bool = False,
    dup_iou: float = DUP_IOU,
    tile_target: int = INFER_TILE,
    tile_overlap: int = INFER_OVERLAP,
) -> ImageEvaluation:
    dets = image_detections(record, tiled, dup_iou, tile_target, tile_overlap)
    m = match(list(record.ground_truths), dets, cfg)
    return ImageEvaluation(record.image_id, precision_recall(m), m)
