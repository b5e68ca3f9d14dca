"""Box files, dataset manifests and report emission.

Box files hold one object per line as ``class cx cy w h [conf]`` with the
center/size normalized to the image dimensions. Lines starting with ``#``
are comments. Manifests are JSON documents listing images and the box
files that belong to them; relative paths resolve against the manifest's
directory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence, Union

import jsonschema

from .geometry import BoundingBox

# Normalized values in (1, 1.0001] are treated as float dust and clamped.
NORMALIZED_SLACK = 1.0001
BUSH_CLASS = 0


class ClassId(IntEnum):
    GREEN = 0
    BLUE = 1


@dataclass(frozen=True)
class GroundTruth:
    cls: int
    box: BoundingBox


@dataclass(frozen=True)
class Detection:
    cls: int
    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


Item = Union[GroundTruth, Detection]


class FormatError(ValueError):
    """A box file line could not be interpreted."""

    def __init__(self, message: str, line: int, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line}: {message}")


class ParseError(FormatError):
    pass


class ClassLabelError(FormatError):
    pass


class RangeError(FormatError):
    pass


class ManifestError(Exception):
    pass


class MissingFileError(ManifestError):
    def __init__(self, path: Path | str):
        self.path = Path(path)
        super().__init__(f"file not found: {self.path}")


class SchemaError(ManifestError):
    pass


class DuplicateImageError(ManifestError):
    def __init__(self, image_id: str):
        self.image_id = image_id
        super().__init__(f"duplicate image id: {image_id!r}")


def _denormalize(cx, cy, w, h, width, height, lineno, source) -> BoundingBox:
    x0 = min(max((cx - w / 2) * width, 0.0), float(width))
    x1 = min(max((cx + w / 2) * width, 0.0), float(width))
    y0 = min(max((cy - h / 2) * height, 0.0), float(height))
    y1 = min(max((cy + h / 2) * height, 0.0), float(height))
    if not (x0 < x1 and y0 < y1):
        raise RangeError("box has no area inside the image", lineno, source)
    return BoundingBox(x0, y0, x1, y1)


def parse_boxes_file(
    text: str | bytes,
    width: int,
    height: int,
    with_confidence: bool,
    num_classes: int = 2,
    source: str | None = None,
) -> list[GroundTruth] | list[Detection]:
    """Parse a normalized box file into pixel-space corner boxes.

    Args:
        text: File contents.
        width, height: Image dimensions the normalized values refer to.
        with_confidence: Expect a sixth confidence column (detections).
        num_classes: Size of the label space; 2 for berries (Green/Blue),
            1 for bush files.
        source: Optional file name used in error messages.

    Boxes extending past the image are clamped to its bounds.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    expected = 6 if with_confidence else 5
    out: list = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != expected:
            raise ParseError(f"expected {expected} fields, got {len(parts)}", lineno, source)
        try:
            cls_f = float(parts[0])
            values = [float(p) for p in parts[1:]]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno, source) from None
        if not all(math.isfinite(v) for v in [cls_f, *values]):
            raise ParseError(f"non-finite field in {line!r}", lineno, source)
        if cls_f != int(cls_f) or not 0 <= int(cls_f) < num_classes:
            raise ClassLabelError(f"class {parts[0]} not in 0..{num_classes - 1}", lineno, source)
        cls = int(cls_f)
        if num_classes == 2:
            cls = ClassId(cls)
        cx, cy, w, h = values[:4]
        for v in (cx, cy, w, h):
            if not 0.0 <= v <= NORMALIZED_SLACK:
                raise RangeError(f"normalized value {v} outside [0, 1]", lineno, source)
        box = _denormalize(cx, cy, w, h, width, height, lineno, source)
        if with_confidence:
            conf = values[4]
            if not 0.0 <= conf <= 1.0:
                raise RangeError(f"confidence {conf} outside [0, 1]", lineno, source)
            out.append(Detection(cls, box, conf))
        else:
            out.append(GroundTruth(cls, box))
    return out


def emit_boxes(items: Iterable[Item], width: int, height: int) -> str:
    """Inverse of :func:`parse_boxes_file`; six decimals per normalized value."""
    lines = []
    for it in items:
        b = it.box
        cx = (b.x_min + b.x_max) / 2 / width
        cy = (b.y_min + b.y_max) / 2 / height
        w = b.width / width
        h = b.height / height
        line = f"{int(it.cls)} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}"
        if isinstance(it, Detection):
            line += f" {it.confidence:.6f}"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    ground_truths: tuple[GroundTruth, ...] = ()
    detections: tuple[Detection, ...] = ()
    bush_boxes: tuple[Detection, ...] = ()
    picked_gt: int | None = None
    # Per-tile detections in tile-local pixels, keyed by (row, col).
    tile_detections: dict[tuple[int, int], tuple[Detection, ...]] | None = field(
        default=None, hash=False
    )


@dataclass(frozen=True)
class LoadFailure:
    image_id: str
    error: str


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    class_names: tuple[str, ...]
    images: tuple[ImageRecord, ...]
    path: Path | None = None
    failures: tuple[LoadFailure, ...] = ()


MANIFEST_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["name", "class_names", "images"],
    "properties": {
        "name": {"type": "string"},
        "class_names": {"type": "array", "items": {"type": "string"}},
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "width", "height", "annotations_path"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                    "annotations_path": {"type": "string"},
                    "detections_path": {"type": "string"},
                    "bush_boxes_path": {"type": "string"},
                    "tile_detections_dir": {"type": "string"},
                    "picked_gt": {"type": "integer", "minimum": 0},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def tile_file_name(row: int, col: int) -> str:
    return f"r{row}_c{col}.txt"


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFileError(path) from None


def _load_tile_detections(directory: Path, width: int, height: int, tile_size: int, overlap: int):
    from .tiling import plan_inference_tiles

    if not directory.is_dir():
        raise MissingFileError(directory)
    plan = plan_inference_tiles(width, height, tile_size, overlap)
    out = {}
    for tile in plan.tiles:
        p = directory / tile_file_name(*tile.index)
        if not p.exists():
            out[tile.index] = ()
            continue
        tw = round(tile.box.width)
        th = round(tile.box.height)
        out[tile.index] = tuple(parse_boxes_file(_read(p), tw, th, True, source=str(p)))
    return out


def load_image_record(entry: dict, base: Path, tile_size: int = 700, overlap: int = 60) -> ImageRecord:
    width, height = entry["width"], entry["height"]

    def boxes(key: str, with_conf: bool, num_classes: int = 2):
        if key not in entry:
            return ()
        p = base / entry[key]
        return tuple(parse_boxes_file(_read(p), width, height, with_conf, num_classes, str(p)))

    tiles = None
    if "tile_detections_dir" in entry:
        tiles = _load_tile_detections(base / entry["tile_detections_dir"], width, height, tile_size, overlap)
    return ImageRecord(
        image_id=entry["id"],
        width=width,
        height=height,
        ground_truths=boxes("annotations_path", False),
        detections=boxes("detections_path", True),
        bush_boxes=boxes("bush_boxes_path", True, num_classes=1),
        picked_gt=entry.get("picked_gt"),
        tile_detections=tiles,
    )


def load_manifest(
    path: Path | str, strict: bool = True, tile_size: int = 700, overlap: int = 60
) -> DatasetManifest:
    """Load a manifest and every box file it references.

    With ``strict=False`` an image whose files are missing or malformed is
    recorded in ``failures`` instead of aborting the load; schema violations
    and duplicate ids are always fatal.
    """
    path = Path(path)
    try:
        doc = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    try:
        jsonschema.validate(doc, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{path}: {loc}: {exc.message}") from None

    seen: set[str] = set()
    for entry in doc["images"]:
        if entry["id"] in seen:
            raise DuplicateImageError(entry["id"])
        seen.add(entry["id"])

    base = path.parent
    records, failures = [], []
    for entry in doc["images"]:
        try:
            records.append(load_image_record(entry, base, tile_size, overlap))
        except (ManifestError, FormatError) as exc:
            if strict:
                raise
            failures.append(LoadFailure(entry["id"], str(exc)))
    return DatasetManifest(
        name=doc["name"],
        class_names=tuple(doc["class_names"]),
        images=tuple(records),
        path=path,
        failures=tuple(failures),
    )


class Report(Protocol):
    kind: str

    def columns(self) -> list[str]: ...

    def records(self) -> list[dict[str, Any]]: ...


def format_number(value: Any) -> Any:
    """Round floats to 6 significant digits; other values pass through."""
    if isinstance(value, bool) or not isinstance(value, float):
        return value
    return float(f"{value:.6g}")


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_report(
    report: Report, path: Path | str, fmt: str = "json", config: dict[str, Any] | None = None
) -> None:
    """Write a report as CSV or JSON with stable column order.

    ``config`` is embedded under ``"config"`` in JSON and as ``cfg_*``
    columns in CSV.
    """
    path = Path(path)
    cols = report.columns()
    rows = report.records()
    config = config or {}
    if fmt == "csv":
        cfg_cols = [f"cfg_{k}" for k in config]
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols + cfg_cols)
            for row in rows:
                writer.writerow([_csv_cell(row.get(c)) for c in cols] + [_csv_cell(v) for v in config.values()])
    elif fmt == "json":
        doc = {
            "kind": report.kind,
            "config": {k: format_number(v) for k, v in config.items()},
            "columns": cols,
            "records": [{c: format_number(row.get(c)) for c in cols} for row in rows],
        }
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


@dataclass
class TableReport:
    """Generic report over a fixed column list, for ad hoc tables."""

    kind: str
    column_names: Sequence[str]
    rows: list[dict[str, Any]] = field(default_factory=list)

    def columns(self) -> list[str]:
        return list(self.column_names)

    def records(self) -> list[dict[str, Any]]:
        return list(self.rows)
