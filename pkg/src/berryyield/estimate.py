"""Berries per bush, picked-visual ratios and crop yield."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


class EstimationError(ValueError):
    pass


def mean_berries_per_bush(one_side_counts: Sequence[float]) -> float:
    """Whole-bush estimate: twice the mean one-side count."""
    if not one_side_counts:
        raise EstimationError("need at least one bush count")
    return 2 * sum(one_side_counts) / len(one_side_counts)


def mean_berries_per_bush_two_sided(side_pairs: Sequence[tuple[float, float]]) -> float:
    """Alternative to the doubling rule when both sides of each bush were counted."""
    if not side_pairs:
        raise EstimationError("need at least one bush count")
    return sum(a + b for a, b in side_pairs) / len(side_pairs)


def alpha_experimental(picked: int, visual: int) -> float:
    if visual <= 0:
        raise EstimationError("visual count must be positive")
    return picked / visual


def alpha_predicted(picked: int, detections: int) -> float:
    if detections <= 0:
        raise EstimationError("detection count must be positive")
    return picked / detections


@dataclass(frozen=True)
class BushCountRecord:
    image_id: str
    detections: int
    visual_gt: int
    picked_gt: int | None = None


@dataclass(frozen=True)
class PvrRow:
    image_id: str
    detections: int
    visual_gt: int
    picked_gt: int
    alpha_predicted: float
    alpha_experimental: float


@dataclass(frozen=True)
class PvrReport:
    rows: tuple[PvrRow, ...]
    mean_predicted: float
    mean_experimental: float
    sd_predicted: float
    sd_experimental: float
    total_predicted: float
    total_experimental: float

    kind = "pvr"

    def columns(self) -> list[str]:
        return ["image_id", "detections", "visual_gt", "picked_gt", "alpha_predicted", "alpha_experimental"]

    def records(self) -> list[dict]:
        out = [dict(vars(r)) for r in self.rows]
        cols = ("detections", "visual_gt", "picked_gt")
        sums = {c: sum(getattr(r, c) for r in self.rows) for c in cols}
        n = len(self.rows)
        out.append({
            "image_id": "Mean",
            **{c: sums[c] / n for c in cols},
            "alpha_predicted": self.mean_predicted,
            "alpha_experimental": self.mean_experimental,
        })
        out.append({
            "image_id": "SD",
            **{c: _sd([getattr(r, c) for r in self.rows]) for c in cols},
            "alpha_predicted": self.sd_predicted,
            "alpha_experimental": self.sd_experimental,
        })
        out.append({
            "image_id": "Total",
            **sums,
            "alpha_predicted": self.total_predicted,
            "alpha_experimental": self.total_experimental,
        })
        return out


def _sd(values: Sequence[float]) -> float:
    # sample SD; a single row has no spread to estimate, report 0
    return statistics.stdev(values) if len(values) > 1 else 0.0


def pvr_report(records: Sequence[BushCountRecord]) -> PvrReport:
    """Per-image and summary picked-visual ratios.

    Totals divide summed counts; they are not averages of the per-row ratios.
    """
    if not records:
        raise EstimationError("no records")
    rows = []
    for r in records:
        if r.picked_gt is None:
            raise EstimationError(f"{r.image_id}: missing picked count")
        if r.detections <= 0 or r.visual_gt <= 0:
            raise EstimationError(f"{r.image_id}: detections and visual count must be positive")
        rows.append(PvrRow(
            r.image_id, r.detections, r.visual_gt, r.picked_gt,
            alpha_predicted(r.picked_gt, r.detections),
            alpha_experimental(r.picked_gt, r.visual_gt),
        ))
    ap = [r.alpha_predicted for r in rows]
    ax = [r.alpha_experimental for r in rows]
    picked = sum(r.picked_gt for r in rows)
    return PvrReport(
        tuple(rows),
        statistics.fmean(ap),
        statistics.fmean(ax),
        _sd(ap),
        _sd(ax),
        alpha_predicted(picked, sum(r.detections for r in rows)),
        alpha_experimental(picked, sum(r.visual_gt for r in rows)),
    )


def load_count_records(path: Path | str) -> list[BushCountRecord]:
    """Read ``image_id,detections,visual_gt,picked_gt`` CSV rows."""
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            if row.get("image_id", "") in ("Mean", "SD", "Total"):
                continue
            try:
                picked = row.get("picked_gt", "")
                out.append(BushCountRecord(
                    row["image_id"],
                    int(row["detections"]),
                    int(row["visual_gt"]),
                    int(picked) if picked not in ("", None) else None,
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise EstimationError(f"{path}:{lineno}: bad count row: {exc!r}") from None
    return out


@dataclass(frozen=True)
class YieldInputs:
    one_side_counts: tuple[float, ...]
    bush_count: float
    area_acres: float
    alpha: float


@dataclass(frozen=True)
class YieldReport:
    berries_per_bush: float
    yield_per_acre: float
    inputs: YieldInputs

    kind = "yield"

    def columns(self) -> list[str]:
        return ["alpha", "bush_count", "area_acres", "bushes_sampled", "berries_per_bush", "yield_per_acre"]

    def records(self) -> list[dict]:
        return [{
            "alpha": self.inputs.alpha,
            "bush_count": self.inputs.bush_count,
            "area_acres": self.inputs.area_acres,
            "bushes_sampled": len(self.inputs.one_side_counts),
            "berries_per_bush": self.berries_per_bush,
            "yield_per_acre": self.yield_per_acre,
        }]


def estimate_yield(inputs: YieldInputs) -> YieldReport:
    """Berries per acre: ``alpha * B * bush_count / area``."""
    if inputs.area_acres <= 0:
        raise EstimationError("area must be positive")
    if inputs.bush_count <= 0:
        raise EstimationError("bush count must be positive")
    if inputs.alpha <= 0:
        raise EstimationError("alpha must be positive")
    b = mean_berries_per_bush(inputs.one_side_counts)
    return YieldReport(b, inputs.alpha * b * inputs.bush_count / inputs.area_acres, inputs)
