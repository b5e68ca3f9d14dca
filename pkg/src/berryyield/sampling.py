"""Field model, stratified waypoint sampling and nearest-bush lookup.

Three planar frames are used:

* GPS: (latitude, longitude) in degrees.
* local: meters east (x) and north (y) of the field centroid, from an
  equirectangular projection.
* row frame: the local frame rotated so bush rows run along +x.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import BoundingBox, Point2D, contains_point, distance

EARTH_RADIUS_M = 6371000.0
MAX_PROJECTION_M = 10_000.0

POINT = "point"
ROW = "row"


@dataclass(frozen=True)
class GpsPoint:
    lat: float
    lon: float


@dataclass(frozen=True)
class FieldSpec:
    corners: tuple[GpsPoint, GpsPoint, GpsPoint, GpsPoint]
    row_direction_deg: float  # clockwise from true north
    area_acres: float
    bush_count: int

    def __post_init__(self) -> None:
        if len(self.corners) != 4:
            raise ValueError(f"a field needs 4 corners, got {len(self.corners)}")
        if not 0.0 <= self.row_direction_deg < 180.0:
            raise ValueError(f"row direction {self.row_direction_deg} outside [0, 180)")
        if not self.area_acres > 0:
            raise ValueError(f"area must be positive, got {self.area_acres}")
        if not (isinstance(self.bush_count, int) and self.bush_count > 0):
            raise ValueError(f"bush count must be a positive integer, got {self.bush_count}")
        pts = [project_to_local(self, c) for c in self.corners]
        crosses = [
            (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
            for a, b, c in zip(pts, pts[1:] + pts[:1], pts[2:] + pts[:2])
        ]
        if not all(z > 0 for z in crosses):
            raise ValueError("field corners must form a convex quadrilateral in counterclockwise order")

    @property
    def origin(self) -> GpsPoint:
        return GpsPoint(
            sum(c.lat for c in self.corners) / 4,
            sum(c.lon for c in self.corners) / 4,
        )


def load_field(path: Path | str) -> FieldSpec:
    """Read a field description.

    JSON keys: ``corners`` (list of ``[lat, lon]``), ``row_direction_deg``,
    ``area_acres``, ``bush_count``.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return FieldSpec(
            corners=tuple(GpsPoint(float(lat), float(lon)) for lat, lon in doc["corners"]),
            row_direction_deg=float(doc["row_direction_deg"]),
            area_acres=float(doc["area_acres"]),
            bush_count=doc["bush_count"],
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed field spec: {exc!r}") from None


def project_to_local(field: FieldSpec, gps: GpsPoint) -> Point2D:
    o = field.origin
    lat0 = math.radians(o.lat)
    x = EARTH_RADIUS_M * math.radians(gps.lon - o.lon) * math.cos(lat0)
    y = EARTH_RADIUS_M * math.radians(gps.lat - o.lat)
    if math.hypot(x, y) > MAX_PROJECTION_M:
        raise ValueError(f"{gps} is more than {MAX_PROJECTION_M / 1000:g} km from the field")
    return Point2D(x, y)


def local_to_gps(field: FieldSpec, p: Point2D) -> GpsPoint:
    """Inverse of :func:`project_to_local`."""
    o = field.origin
    lat0 = math.radians(o.lat)
    return GpsPoint(
        o.lat + math.degrees(p.y / EARTH_RADIUS_M),
        o.lon + math.degrees(p.x / (EARTH_RADIUS_M * math.cos(lat0))),
    )


def _row_axes(row_direction_deg: float) -> tuple[tuple[float, float], tuple[float, float]]:
    t = math.radians(row_direction_deg)
    u = (math.sin(t), math.cos(t))  # along rows
    v = (-u[1], u[0])  # u rotated 90 degrees counterclockwise
    return u, v


def local_to_row_frame(p: Point2D, row_direction_deg: float) -> Point2D:
    u, v = _row_axes(row_direction_deg)
    return Point2D(p.x * u[0] + p.y * u[1], p.x * v[0] + p.y * v[1])


def row_frame_to_local(q: Point2D, row_direction_deg: float) -> Point2D:
    u, v = _row_axes(row_direction_deg)
    return Point2D(q.x * u[0] + q.y * v[0], q.x * u[1] + q.y * v[1])


@dataclass(frozen=True)
class GridSpec:
    m_rows: int
    n_cols: int

    def __post_init__(self) -> None:
        if self.m_rows < 1 or self.n_cols < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.m_rows}x{self.n_cols}")

    @classmethod
    def parse(cls, text: str) -> GridSpec:
        try:
            m, n = text.lower().split("x")
            return cls(int(m), int(n))
        except ValueError:
            raise ValueError(f"grid must look like MxN, got {text!r}") from None


@dataclass(frozen=True)
class Cell:
    index: tuple[int, int]  # (m, n)
    box: BoundingBox  # row frame, meters


def field_rectangle(field: FieldSpec) -> BoundingBox:
    """Bounding rectangle of the corners in the row frame."""
    pts = [local_to_row_frame(project_to_local(field, c), field.row_direction_deg) for c in field.corners]
    return BoundingBox(min(p.x for p in pts), min(p.y for p in pts), max(p.x for p in pts), max(p.y for p in pts))


def partition_rectangle(rect: BoundingBox, grid: GridSpec) -> list[Cell]:
    """Split a rectangle into ``m_rows x n_cols`` equal cells sharing exact edges."""
    xs = [rect.x_min + rect.width * k / grid.n_cols for k in range(grid.n_cols)] + [rect.x_max]
    ys = [rect.y_min + rect.height * k / grid.m_rows for k in range(grid.m_rows)] + [rect.y_max]
    return [
        Cell((m, n), BoundingBox(xs[n], ys[m], xs[n + 1], ys[m + 1]))
        for m in range(grid.m_rows)
        for n in range(grid.n_cols)
    ]


def partition_grid(field: FieldSpec, grid: GridSpec) -> list[Cell]:
    return partition_rectangle(field_rectangle(field), grid)


def suggest_grid(rect: BoundingBox, cells: int) -> GridSpec:
    """Grid with about ``cells`` cells whose cells are closest to square."""
    best = None
    for m in range(1, cells + 1):
        n = max(1, round(cells / m))
        aspect = (rect.width / n) / (rect.height / m)
        key = (abs(m * n - cells), abs(math.log(aspect)))
        if best is None or key < best[0]:
            best = (key, GridSpec(m, n))
    return best[1]


def _cell_rng(seed: int, index: tuple[int, int]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & (2**64 - 1), *index])))


def _open_uniform(rng: np.random.Generator) -> float:
    while True:
        u = rng.random()
        if u > 0.0:
            return u


def sample_point(cell: Cell, strategy: str, seed: int) -> Point2D:
    """One waypoint for a cell, a pure function of ``(seed, cell.index)``.

    ``point`` draws uniformly from the cell interior; ``row`` draws uniformly
    along the cell's low-x edge, which runs perpendicular to the rows.
    """
    rng = _cell_rng(seed, cell.index)
    b = cell.box
    if strategy == POINT:
        x = b.x_min + b.width * _open_uniform(rng)
        y = b.y_min + b.height * _open_uniform(rng)
        # guard against rounding up onto the far edge
        x = min(x, math.nextafter(b.x_max, b.x_min))
        y = min(y, math.nextafter(b.y_max, b.y_min))
        return Point2D(x, y)
    if strategy == ROW:
        y = min(b.y_min + b.height * rng.random(), math.nextafter(b.y_max, b.y_min))
        return Point2D(b.x_min, y)
    raise ValueError(f"unknown sampling strategy {strategy!r}")


@dataclass(frozen=True)
class Waypoint:
    cell: tuple[int, int]
    row_frame: Point2D
    local: Point2D
    gps: GpsPoint
    in_field: bool


@dataclass(frozen=True)
class SamplePlan:
    strategy: str
    seed: int
    altitude_m: float
    standoff_m: float
    grid: GridSpec
    waypoints: tuple[Waypoint, ...]

    kind = "sample_plan"

    def columns(self) -> list[str]:
        return ["cell_m", "cell_n", "x_m", "y_m", "lat", "lon", "in_field", "altitude_m", "standoff_m"]

    def records(self) -> list[dict]:
        return [
            {
                "cell_m": w.cell[0],
                "cell_n": w.cell[1],
                "x_m": w.local.x,
                "y_m": w.local.y,
                "lat": f"{w.gps.lat:.9f}",
                "lon": f"{w.gps.lon:.9f}",
                "in_field": w.in_field,
                "altitude_m": self.altitude_m,
                "standoff_m": self.standoff_m,
            }
            for w in self.waypoints
        ]


def sample_points(cells: Sequence[Cell], strategy: str, seed: int) -> list[tuple[Cell, Point2D]]:
    return [(c, sample_point(c, strategy, seed)) for c in cells]


def _inside_polygon(p: Point2D, poly: Sequence[Point2D]) -> bool:
    # convex, counterclockwise: inside iff left of (or on) every edge
    return all(
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0 for a, b in zip(poly, [*poly[1:], poly[0]])
    )


def plan_mission(
    field: FieldSpec,
    grid: GridSpec,
    strategy: str,
    seed: int,
    altitude_m: float = 10.0,
    standoff_m: float = 3.0,
) -> SamplePlan:
    """Waypoints, one per grid cell, in row-frame, local and GPS coordinates.

    Waypoints falling outside a skewed field are kept and flagged.
    """
    if altitude_m <= 0 or standoff_m <= 0:
        raise ValueError("altitude and standoff must be positive")
    polygon = [project_to_local(field, c) for c in field.corners]
    wps = []
    for cell, q in sample_points(partition_grid(field, grid), strategy, seed):
        p = row_frame_to_local(q, field.row_direction_deg)
        wps.append(Waypoint(cell.index, q, p, local_to_gps(field, p), _inside_polygon(p, polygon)))
    return SamplePlan(strategy, seed, altitude_m, standoff_m, grid, tuple(wps))


@dataclass(frozen=True)
class BushPosition:
    bush_id: str
    location: Point2D


def nearest_bush(p: Point2D, bushes: Sequence[BushPosition]) -> BushPosition:
    if not bushes:
        raise ValueError("no bushes to choose from")
    return min(bushes, key=lambda b: (distance(p, b.location), b.bush_id))


def cell_of(cells: Sequence[Cell], q: Point2D) -> Cell | None:
    return next((c for c in cells if contains_point(c.box, q)), None)
