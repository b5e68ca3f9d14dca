"""Tile planning for training and inference, and merging of per-tile detections."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import BoundingBox, boxes_array, center, contains_point, iou_many
from .io import Detection, GroundTruth

TRAIN_TILE = 640
INFER_TILE = 700
INFER_OVERLAP = 60
DUP_IOU = 0.5

TileIndex = tuple[int, int]


@dataclass(frozen=True)
class Tile:
    index: TileIndex
    box: BoundingBox

    @property
    def origin(self) -> tuple[float, float]:
        return self.box.x_min, self.box.y_min


@dataclass(frozen=True)
class TilePlan:
    image_id: str
    width: int
    height: int
    kind: str  # "training" or "inference"
    tiles: tuple[Tile, ...]

    def tile(self, index: TileIndex) -> Tile:
        for t in self.tiles:
            if t.index == index:
                return t
        raise KeyError(f"tile {index} not in plan for {self.image_id!r}")

    def columns(self) -> list[str]:
        return ["image_id", "row", "col", "x_min", "y_min", "x_max", "y_max"]

    def records(self) -> list[dict]:
        return [
            {
                "image_id": self.image_id,
                "row": t.index[0],
                "col": t.index[1],
                "x_min": int(t.box.x_min),
                "y_min": int(t.box.y_min),
                "x_max": int(t.box.x_max),
                "y_max": int(t.box.y_max),
            }
            for t in self.tiles
        ]


def plan_training_tiles(width: int, height: int, tile_size: int = TRAIN_TILE, image_id: str = "") -> TilePlan:
    """Non-overlapping square tiles from the top-left; remainder strips are dropped."""
    if width < 1 or height < 1:
        raise ValueError(f"image dimensions must be positive, got {width}x{height}")
    tiles = tuple(
        Tile((r, c), BoundingBox(c * tile_size, r * tile_size, (c + 1) * tile_size, (r + 1) * tile_size))
        for r in range(height // tile_size)
        for c in range(width // tile_size)
    )
    return TilePlan(image_id, width, height, "training", tiles)


@dataclass
class TileAssignment:
    tiles: dict[TileIndex, list[GroundTruth]] = field(default_factory=dict)
    dropped: int = 0

    @property
    def assigned(self) -> int:
        return sum(len(v) for v in self.tiles.values())


def assign_annotations(plan: TilePlan, gts: list[GroundTruth]) -> TileAssignment:
    """Give each annotation to the tile containing its center, in tile-local pixels.

    Boxes are clipped to the tile. Annotations centered in a discarded strip
    are dropped and counted.
    """
    out = TileAssignment({t.index: [] for t in plan.tiles})
    for gt in gts:
        c = center(gt.box)
        tile = next((t for t in plan.tiles if contains_point(t.box, c)), None)
        if tile is None:
            out.dropped += 1
            continue
        clipped = gt.box.clip(*tile.box.as_tuple())
        ox, oy = tile.origin
        out.tiles[tile.index].append(replace(gt, box=clipped.translate(-ox, -oy)))
    return out


def axis_spans(length: int, target: int = INFER_TILE, overlap: int = INFER_OVERLAP) -> list[tuple[int, int]]:
    """Split ``[0, length)`` into spans overlapping by exactly ``overlap``.

    The span count is the nearest integer to ``(length - overlap) / (target - overlap)``
    (halves round up), and the leftover pixels go one each to the first spans.
    """
    if target <= overlap:
        raise ValueError(f"tile size {target} must exceed overlap {overlap}")
    if length <= overlap:
        raise ValueError(f"dimension {length} must exceed the tile overlap {overlap}")
    stride_total = length - overlap
    n = max(1, int(np.floor(stride_total / (target - overlap) + 0.5)))
    if n == 1:
        return [(0, length)]
    base = stride_total // n + overlap
    extra = stride_total % n
    spans = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        spans.append((start, start + size))
        start += size - overlap
    assert spans[-1][1] == length
    return spans


def plan_inference_tiles(
    width: int, height: int, target: int = INFER_TILE, overlap: int = INFER_OVERLAP, image_id: str = ""
) -> TilePlan:
    xs = axis_spans(width, target, overlap)
    ys = axis_spans(height, target, overlap)
    tiles = tuple(
        Tile((r, c), BoundingBox(x0, y0, x1, y1))
        for r, (y0, y1) in enumerate(ys)
        for c, (x0, x1) in enumerate(xs)
    )
    return TilePlan(image_id, width, height, "inference", tiles)


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def dedupe_detections(dets: list[Detection], dup_iou: float = DUP_IOU) -> list[Detection]:
    """Keep one detection per duplicate cluster.

    Two detections are duplicates when they share a class and their IoU is at
    least ``dup_iou``; clusters are the connected components of that relation.
    ``dets`` must already be in priority order (best first); the first member
    of each cluster survives. Output is in input order.
    """
    n = len(dets)
    parent = list(range(n))
    by_class: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        by_class.setdefault(int(d.cls), []).append(i)
    for idx in by_class.values():
        arr = boxes_array([dets[i].box for i in idx])
        for k in range(len(idx) - 1):
            hits = np.nonzero(iou_many(dets[idx[k]].box, arr[k + 1 :]) >= dup_iou)[0]
            for h in hits:
                a, b = _find(parent, idx[k]), _find(parent, idx[k + 1 + h])
                if a != b:
                    # the smaller index is the higher-priority member
                    parent[max(a, b)] = min(a, b)
    return [d for i, d in enumerate(dets) if _find(parent, i) == i]


def merge_tile_detections(
    per_tile: dict[TileIndex, list[Detection]], plan: TilePlan, dup_iou: float = DUP_IOU
) -> list[Detection]:
    """Translate tile-local detections to the image frame and drop duplicates.

    Within each duplicate cluster the highest-confidence member survives; ties
    go to the earlier tile index, then the earlier list position. The result
    is sorted by descending confidence.
    """
    origins = {t.index: t.origin for t in plan.tiles}
    candidates = []
    for index in sorted(per_tile):
        if index not in origins:
            raise KeyError(f"detections reference unknown tile {index}")
        ox, oy = origins[index]
        for pos, det in enumerate(per_tile[index]):
            moved = det if ox == 0 and oy == 0 else replace(det, box=det.box.translate(ox, oy))
            candidates.append((-det.confidence, index, pos, moved))
    candidates.sort(key=lambda c: c[:3])
    return dedupe_detections([c[3] for c in candidates], dup_iou)
