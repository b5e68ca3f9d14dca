"""End-to-end runs over a dataset manifest or a field description."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence, TypeVar

from . import __version__
from .bush import (
    BBOX_FILTER,
    CROP,
    BushBerryCount,
    BushCountTable,
    BushSelection,
    CropRectangles,
    count_berries_bbox_filter,
    count_berries_crop,
    select_central_bush,
)
from .evaluation import MatchConfig, PrecisionRecall, evaluate_image, match, precision_recall
from .estimate import BushCountRecord, PvrReport, pvr_report
from .io import DatasetManifest, ImageRecord, LoadFailure, write_report
from .sampling import GridSpec, SamplePlan, load_field, plan_mission
from .tiling import DUP_IOU, INFER_OVERLAP, INFER_TILE

log = logging.getLogger(__name__)

R = TypeVar("R")


@dataclass(frozen=True)
class RunConfig:
    match: MatchConfig = MatchConfig()
    dup_iou: float = DUP_IOU
    tile_target: int = INFER_TILE
    tile_overlap: int = INFER_OVERLAP
    tiled: bool = False
    counting_method: str = CROP
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.counting_method not in (CROP, BBOX_FILTER):
            raise ValueError(f"unknown counting method {self.counting_method!r}")
        if not 0.0 < self.dup_iou <= 1.0:
            raise ValueError(f"dup_iou must be in (0, 1], got {self.dup_iou}")
        if self.tile_target <= self.tile_overlap:
            raise ValueError("tile size must exceed the overlap")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")

    def as_dict(self) -> dict[str, Any]:
        # jobs only changes scheduling, never results, so it stays out of reports
        return {
            "confidence_threshold": self.match.confidence_threshold,
            "iou_threshold": self.match.iou_threshold,
            "dup_iou": self.dup_iou,
            "tile_target": self.tile_target,
            "tile_overlap": self.tile_overlap,
            "tiled": self.tiled,
            "counting_method": self.counting_method,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ImageMetrics:
    image_id: str
    metrics: PrecisionRecall


@dataclass
class DatasetSummary:
    dataset: str
    config: RunConfig
    images: list[ImageMetrics] = field(default_factory=list)
    pooled: PrecisionRecall = field(default_factory=PrecisionRecall)
    counts: list[BushBerryCount] = field(default_factory=list)
    selections: list[BushSelection] = field(default_factory=list)
    pvr: PvrReport | None = None
    failures: list[LoadFailure] = field(default_factory=list)

    kind = "evaluation"

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def columns(self) -> list[str]:
        return ["image_id", *PrecisionRecall().row()]

    def records(self) -> list[dict]:
        rows = [{"image_id": im.image_id, **im.metrics.row()} for im in self.images]
        rows.append({"image_id": "TOTAL", **self.pooled.row()})
        return rows


def _map_ordered(fn: Callable[[ImageRecord], R], records: Sequence[ImageRecord], jobs: int) -> list[R | Exception]:
    def safe(rec):
        try:
            return fn(rec)
        except Exception as exc:  # recorded per image, the run goes on
            return exc

    if jobs <= 1:
        return [safe(r) for r in records]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(safe, records))


def _pool(metrics: Sequence[PrecisionRecall]) -> PrecisionRecall:
    total = PrecisionRecall()
    for m in metrics:
        total = total + m
    return total


def run_fullframe_eval(manifest: DatasetManifest, config: RunConfig = RunConfig()) -> DatasetSummary:
    summary = DatasetSummary(manifest.name, config, failures=list(manifest.failures))

    def one(rec: ImageRecord):
        return evaluate_image(rec, config.match, config.tiled, config.dup_iou, config.tile_target, config.tile_overlap)

    for rec, res in zip(manifest.images, _map_ordered(one, manifest.images, config.jobs)):
        if isinstance(res, Exception):
            log.warning("image %s failed: %s", rec.image_id, res)
            summary.failures.append(LoadFailure(rec.image_id, str(res)))
            continue
        summary.images.append(ImageMetrics(rec.image_id, res.metrics))
    summary.pooled = _pool([im.metrics for im in summary.images])
    return summary


def run_bushcropped_eval(manifest: DatasetManifest, config: RunConfig = RunConfig()) -> DatasetSummary:
    """Central-bush selection, per-bush counting and in-crop metrics.

    A PVR report is attached when every processed image has a picked count.
    """
    summary = DatasetSummary(manifest.name, config, failures=list(manifest.failures))

    def one(rec: ImageRecord):
        sel = select_central_bush(rec.bush_boxes, rec.width, rec.height, rec.image_id)
        crop = count_berries_crop(rec, sel, config.match)
        if config.counting_method == CROP:
            count = crop.count
        else:
            count = count_berries_bbox_filter(rec, sel, config.match.confidence_threshold)
        return sel, crop.metrics, count

    for rec, res in zip(manifest.images, _map_ordered(one, manifest.images, config.jobs)):
        if isinstance(res, Exception):
            log.warning("image %s unprocessable: %s", rec.image_id, res)
            summary.failures.append(LoadFailure(rec.image_id, str(res)))
            continue
        sel, metrics, count = res
        summary.selections.append(sel)
        summary.images.append(ImageMetrics(rec.image_id, metrics))
        summary.counts.append(count)
    summary.pooled = _pool([im.metrics for im in summary.images])

    picked = {r.image_id: r.picked_gt for r in manifest.images}
    if summary.counts and all(picked[c.image_id] is not None for c in summary.counts):
        try:
            summary.pvr = pvr_report([
                BushCountRecord(c.image_id, c.detections_in_bush, c.visual_gt_in_bush, picked[c.image_id])
                for c in summary.counts
            ])
        except ValueError as exc:
            log.warning("PVR report skipped: %s", exc)
    return summary


def pooled_by_concatenation(manifest: DatasetManifest, cfg: MatchConfig) -> PrecisionRecall:
    """Reference pooling: match every image separately, sum the counts."""
    return _pool([precision_recall(match(list(r.ground_truths), list(r.detections), cfg)) for r in manifest.images])


def run_mission_plan(
    field_spec_path: Path | str,
    grid: GridSpec,
    strategy: str,
    seed: int,
    altitude_m: float = 10.0,
    standoff_m: float = 3.0,
) -> SamplePlan:
    return plan_mission(load_field(field_spec_path), grid, strategy, seed, altitude_m, standoff_m)


def write_run(summary: DatasetSummary, out_dir: Path | str, fmt: str = "json") -> list[Path]:
    """Write all reports for a dataset run plus ``run.json`` metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = summary.config.as_dict()
    written = []

    def emit(report, stem):
        p = out / f"{stem}.{fmt}"
        write_report(report, p, fmt, cfg)
        written.append(p)

    emit(summary, "metrics")
    if summary.counts:
        emit(BushCountTable(tuple(summary.counts)), "bush_counts")
        emit(CropRectangles(tuple(summary.selections)), "crop_rectangles")
    if summary.pvr is not None:
        emit(summary.pvr, "pvr")
    meta = {
        "tool": "berryyield",
        "version": __version__,
        "dataset": summary.dataset,
        "config": cfg,
        "images_processed": len(summary.images),
        "failures": [asdict(f) for f in summary.failures],
        "reports": [p.name for p in written],
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return written
