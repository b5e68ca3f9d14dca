"""Command-line front end.

Exit status: 0 on success, 1 when some images were skipped, 2 on usage or
input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from .bush import BBOX_FILTER, CROP
from .estimate import YieldInputs, estimate_yield, load_count_records, pvr_report
from .evaluation import MatchConfig
from .io import TableReport, load_manifest, write_report
from .pipeline import RunConfig, run_bushcropped_eval, run_fullframe_eval, run_mission_plan, write_run
from .sampling import POINT, ROW, GridSpec, load_field
from .tiling import INFER_OVERLAP, INFER_TILE, TRAIN_TILE, plan_inference_tiles, plan_training_tiles
from .tracking import MOTA_IOU, evaluate_tracking, load_frames, report_from_counts

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _format_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="json", help="report file format (default: json)")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, type=Path, help="dataset manifest (JSON)")
    p.add_argument("--out", required=True, type=Path, help="run directory for reports")
    p.add_argument("--conf", type=float, default=0.1, help="detection confidence threshold (default: 0.1)")
    p.add_argument("--iou", type=float, default=0.3, help="IoU needed for a true positive (default: 0.3)")
    p.add_argument("--dup-iou", type=float, default=0.5, help="IoU at which tile detections are duplicates (default: 0.5)")
    p.add_argument("--tile", type=int, default=INFER_TILE, help=f"inference tile size in pixels (default: {INFER_TILE})")
    p.add_argument("--overlap", type=int, default=INFER_OVERLAP, help=f"inference tile overlap (default: {INFER_OVERLAP})")
    p.add_argument("--tiled", action="store_true", help="merge per-tile detections instead of using full-frame ones")
    p.add_argument("--seed", type=int, default=0, help="recorded in the run config (default: 0)")
    p.add_argument("--jobs", type=int, default=1, help="images evaluated in parallel (default: 1)")
    _format_flag(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="berryyield", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("tile", help="emit tile plans")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", type=Path, help="plan every image in a manifest")
    src.add_argument("--size", metavar="WxH", help="plan a single image of this size")
    p.add_argument("--mode", choices=("training", "inference"), default="inference", help="tile layout (default: inference)")
    p.add_argument("--tile", type=int, help=f"tile size (default: {TRAIN_TILE} training, {INFER_TILE} inference)")
    p.add_argument("--overlap", type=int, default=INFER_OVERLAP, help=f"inference overlap (default: {INFER_OVERLAP})")
    p.add_argument("--out", required=True, type=Path, help="output file")
    _format_flag(p)

    p = sub.add_parser("eval", help="full-frame detection evaluation")
    _run_flags(p)

    p = sub.add_parser("crop-eval", help="central-bush evaluation and PVR")
    _run_flags(p)
    p.add_argument("--method", choices=("crop", "bbox"), default="crop", help="berry counting method (default: crop)")

    p = sub.add_parser("mota", help="tracking accuracy")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--frames", type=Path, help="JSON Lines frame file")
    src.add_argument("--counts", type=Path, help="JSON with gt, fp, fn, idsw (optional frames, predictions)")
    p.add_argument("--iou", type=float, default=MOTA_IOU, help=f"IoU gate for a match (default: {MOTA_IOU})")
    p.add_argument("--out", type=Path, help="report file")
    _format_flag(p)

    p = sub.add_parser("plan", help="stratified sampling mission")
    p.add_argument("--field", required=True, type=Path, help="field spec (JSON)")
    p.add_argument("--grid", required=True, metavar="MxN", help="grid rows x columns, e.g. 3x4")
    p.add_argument("--strategy", choices=(POINT, ROW), default=POINT, help="sampling strategy (default: point)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--altitude", type=float, default=10.0, help="flight altitude in meters (default: 10)")
    p.add_argument("--standoff", type=float, default=3.0, help="side-view distance to the bush in meters (default: 3)")
    p.add_argument("--out", type=Path, help="plan file (default: plan.<format>)")
    _format_flag(p)

    p = sub.add_parser("yield", help="crop yield from one-side bush counts")
    p.add_argument("--counts", required=True, type=Path, help="one-side berry counts, one per line or a JSON list")
    p.add_argument("--alpha", required=True, type=float, help="picked-visual ratio")
    p.add_argument("--field", type=Path, help="take bush count and area from a field spec")
    p.add_argument("--bush-count", type=int, help="bushes in the field")
    p.add_argument("--area", type=float, help="field area in acres")
    p.add_argument("--out", type=Path, help="report file")
    _format_flag(p)

    p = sub.add_parser("pvr", help="picked-visual ratio table")
    p.add_argument("--counts", required=True, type=Path, help="CSV with image_id,detections,visual_gt,picked_gt")
    p.add_argument("--out", type=Path, help="report file")
    _format_flag(p)
    return parser


def _run_config(args, method: str = CROP) -> RunConfig:
    return RunConfig(
        match=MatchConfig(args.conf, args.iou),
        dup_iou=args.dup_iou,
        tile_target=args.tile,
        tile_overlap=args.overlap,
        tiled=args.tiled,
        counting_method=method,
        seed=args.seed,
        jobs=args.jobs,
    )


def _print_metrics(summary) -> None:
    o = summary.pooled.overall
    print(f"dataset {summary.dataset}: {len(summary.images)} images, {len(summary.failures)} skipped")
    for c, n in summary.pooled.per_class.items():
        name = ["Green", "Blue"][int(c)]
        print(f"  {name:<8} precision {n.precision:.4f}  recall {n.recall:.4f}")
    print(f"  {'Overall':<8} precision {o.precision:.4f}  recall {o.recall:.4f}")
    for f in summary.failures:
        print(f"  skipped {f.image_id}: {f.error}")


def cmd_eval(args, cropped: bool) -> int:
    method = {"crop": CROP, "bbox": BBOX_FILTER}[getattr(args, "method", "crop")]
    config = _run_config(args, method)
    manifest = load_manifest(args.manifest, strict=False, tile_size=args.tile, overlap=args.overlap)
    summary = run_bushcropped_eval(manifest, config) if cropped else run_fullframe_eval(manifest, config)
    write_run(summary, args.out, args.format)
    _print_metrics(summary)
    if summary.pvr is not None:
        r = summary.pvr
        print(f"  alpha_p total {r.total_predicted:.3f}  alpha total {r.total_experimental:.3f}")
    return EXIT_PARTIAL if summary.partial else EXIT_OK


def cmd_tile(args) -> int:
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
        images = [(r.image_id, r.width, r.height) for r in manifest.images]
    else:
        m = re.fullmatch(r"(\d+)[xX](\d+)", args.size)
        if not m:
            raise UsageError(f"--size must look like WxH, got {args.size!r}")
        images = [("image", int(m.group(1)), int(m.group(2)))]
    rows = []
    for image_id, w, h in images:
        if args.mode == "training":
            plan = plan_training_tiles(w, h, args.tile or TRAIN_TILE, image_id)
            if not plan.tiles:
                print(f"warning: {image_id} ({w}x{h}) is smaller than one tile, skipped", file=sys.stderr)
        else:
            plan = plan_inference_tiles(w, h, args.tile or INFER_TILE, args.overlap, image_id)
        rows.extend(plan.records())
    cols = ["image_id", "row", "col", "x_min", "y_min", "x_max", "y_max"]
    write_report(TableReport(f"{args.mode}_tiles", cols, rows), args.out, args.format)
    print(f"{len(rows)} tiles for {len(images)} images -> {args.out}")
    return EXIT_OK


def cmd_mota(args) -> int:
    if args.frames is not None:
        report = evaluate_tracking(load_frames(args.frames), args.iou)
    else:
        doc = json.loads(args.counts.read_text(encoding="utf-8"))
        try:
            report = report_from_counts(
                int(doc["gt"]), int(doc["fp"]), int(doc["fn"]), int(doc["idsw"]),
                frames=int(doc.get("frames", 0)),
                predictions=doc.get("predictions"),
                iou_threshold=args.iou,
            )
        except KeyError as exc:
            raise UsageError(f"{args.counts}: missing key {exc}") from None
    if args.out is not None:
        write_report(report, args.out, args.format)
    print(
        f"frames {report.frames}  gt {report.gt_count}  fp {report.false_positives}  "
        f"fn {report.false_negatives}  idsw {report.mismatches}"
    )
    print(f"MOTA {report.mota:.4f}")
    return EXIT_OK


def cmd_plan(args) -> int:
    grid = GridSpec.parse(args.grid)
    plan = run_mission_plan(args.field, grid, args.strategy, args.seed, args.altitude, args.standoff)
    out = args.out or Path(f"plan.{args.format}")
    write_report(plan, out, args.format, {"strategy": plan.strategy, "seed": plan.seed, "grid": args.grid})
    outside = sum(1 for w in plan.waypoints if not w.in_field)
    print(f"{len(plan.waypoints)} waypoints ({plan.strategy}, seed {plan.seed}) -> {out}")
    if outside:
        print(f"warning: {outside} waypoints fall outside the field polygon", file=sys.stderr)
    return EXIT_OK


def _read_counts(path: Path) -> list[float]:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        values = doc["one_side_counts"] if isinstance(doc, dict) else doc
        return [float(v) for v in values]
    values = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        values.extend(float(tok) for tok in re.split(r"[,\s]+", line) if tok)
    return values


def cmd_yield(args) -> int:
    bushes, area = args.bush_count, args.area
    if args.field is not None:
        spec = load_field(args.field)
        bushes = bushes if bushes is not None else spec.bush_count
        area = area if area is not None else spec.area_acres
    if bushes is None or area is None:
        raise UsageError("need --bush-count and --area, or --field")
    report = estimate_yield(YieldInputs(tuple(_read_counts(args.counts)), bushes, area, args.alpha))
    if args.out is not None:
        write_report(report, args.out, args.format)
    print(f"B {report.berries_per_bush:,.2f} berries/bush  Y {report.yield_per_acre:,.2f} berries/acre")
    return EXIT_OK


def cmd_pvr(args) -> int:
    report = pvr_report(load_count_records(args.counts))
    if args.out is not None:
        write_report(report, args.out, args.format)
    print(f"{'image':<8} {'alpha_p':>8} {'alpha':>8}")
    for row in report.records():
        print(f"{row['image_id']:<8} {row['alpha_predicted']:>8.3f} {row['alpha_experimental']:>8.3f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {
        "tile": cmd_tile,
        "eval": lambda a: cmd_eval(a, cropped=False),
        "crop-eval": lambda a: cmd_eval(a, cropped=True),
        "mota": cmd_mota,
        "plan": cmd_plan,
        "yield": cmd_yield,
        "pvr": cmd_pvr,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # every failure maps to one diagnostic line
        print(f"berryyield {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
