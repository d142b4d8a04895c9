"""Command-line pipeline: synth, encode, decode, eval, angle-stats, roundtrip.

Exit codes: 0 success, 2 usage errors (argparse), 1 data errors.  Config
files are JSON objects with optional sections "scene", "noise",
"targets", "decoder" and "eval"; each section's keys mirror the matching
config dataclass fields exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats, plots
from .decoder import DecoderConfig, Orientation, decode_scene
from .errors import DomainError, LaneGuideError, ParseError
from .evaluation import EvalConfig, angle_bucketed_recall, evaluate_corpus
from .geometry import (
    CanvasDims,
    GuideKind,
    Lane,
    grazing_angle_histogram,
    make_guide_line,
)
from .synth import RNG_ALGORITHM, NoiseConfig, SceneConfig, corrupt_targets, gen_scene
from .targets import GridSpec, TargetConfig, encode_scene

_GUIDES = {"rect": GuideKind.RECTANGLE, "curved": GuideKind.CURVED}
_TIEBREAKS = {"row": Orientation.ROW_WISE, "col": Orientation.COL_WISE}


# ------------------------------------------------------------- config IO

def _load_doc(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid config JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"config {path} must be a JSON object")
    return doc


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ParseError(f'config section "{name}" must be a JSON object')
    return sec


def _check_keys(sec: dict, allowed, name: str) -> None:
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ParseError(f'unknown {name} config keys: {", ".join(unknown)}')


def _scene_config(doc: dict) -> SceneConfig:
    sec = dict(_section(doc, "scene"))
    _check_keys(sec, ("canvas", "lanes_min", "lanes_max", "curvature_max",
                      "corner_lane_fraction", "horizontal_lane_fraction", "seed"),
                "scene")
    if "canvas" in sec:
        sec["canvas"] = CanvasDims(int(sec["canvas"]["w"]), int(sec["canvas"]["h"]))
    return SceneConfig(**sec)


def _noise_config(doc: dict) -> NoiseConfig:
    sec = _section(doc, "noise")
    _check_keys(sec, ("gaussian_sigma", "dropout_prob", "blur_radius",
                      "scatter", "seed"), "noise")
    return NoiseConfig(**sec)


def _target_config(doc: dict) -> TargetConfig:
    sec = _section(doc, "targets")
    _check_keys(sec, ("sigma", "d", "kernel_radius_sigmas"), "targets")
    return TargetConfig(**sec)


def _decoder_config(doc: dict) -> DecoderConfig:
    sec = dict(_section(doc, "decoder"))
    _check_keys(sec, ("peak_threshold", "max_instances", "mask_threshold",
                      "anchor_window", "min_anchor_count", "orientation_tiebreak",
                      "peak_match_radius"), "decoder")
    if "orientation_tiebreak" in sec:
        key = sec["orientation_tiebreak"]
        if key not in _TIEBREAKS:
            raise ParseError(f'orientation_tiebreak must be "row" or "col", got {key!r}')
        sec["orientation_tiebreak"] = _TIEBREAKS[key]
    return DecoderConfig(**sec)


def _eval_config(doc: dict) -> EvalConfig:
    sec = _section(doc, "eval")
    _check_keys(sec, ("lane_width", "iou_threshold", "raster_scale"), "eval")
    return EvalConfig(**sec)


def _parse_canvas(text: str) -> CanvasDims:
    try:
        w, h = text.lower().split("x")
        return CanvasDims(int(w), int(h))
    except (ValueError, TypeError):
        raise ParseError(f"canvas must look like 800x320, got {text!r}") from None


def _parse_edges(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ParseError(f"edges must be comma-separated numbers, got {text!r}") from None


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    formats.atomic_write_text(path, buf.getvalue())


def _fmt(v: float) -> str:
    return "nan" if (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def _map_tasks(fn, tasks, jobs: int) -> list:
    """Run fn over tasks, fanning out to worker processes when jobs > 1.

    Results keep task order, so emissions stay deterministic either way.
    """
    if jobs < 1:
        raise DomainError(f"jobs must be at least 1, got {jobs}")
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# ----------------------------------------------------------- subcommands

def _scene_paths(dir_path) -> list[Path]:
    root = Path(dir_path)
    paths = sorted(p for p in root.glob("*.json") if p.name != "config.json")
    if not paths:
        raise ParseError(f"no scene .json files under {root}")
    return paths


def _cmd_synth(args) -> int:
    doc = _load_doc(args.config) if args.config else {}
    cfg = _scene_config(doc)
    count = args.count if args.count is not None else int(doc.get("count", 20))
    if count < 1:
        raise DomainError("scene count must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        lanes = gen_scene(replace(cfg, seed=cfg.seed + i))
        formats.write_scene_file(out / f"scene{i:05d}.json", lanes, cfg.canvas)
    echo = {
        "rng": RNG_ALGORITHM,
        "count": count,
        "scene": {
            "canvas": {"w": cfg.canvas.w, "h": cfg.canvas.h},
            "lanes_min": cfg.lanes_min,
            "lanes_max": cfg.lanes_max,
            "curvature_max": cfg.curvature_max,
            "corner_lane_fraction": cfg.corner_lane_fraction,
            "horizontal_lane_fraction": cfg.horizontal_lane_fraction,
            "seed": cfg.seed,
        },
    }
    formats.atomic_write_text(out / "config.json", json.dumps(echo, indent=1) + "\n")
    print(f"wrote {count} scenes to {out}")
    return 0


def _encode_one(task):
    path, canvas, guide, grid, tcfg = task
    lanes, c = formats.read_scene_file(path)
    if c != canvas:
        raise ParseError(f"{path.name}: canvas {c} differs from {canvas}")
    return encode_scene(lanes, guide, grid, tcfg)


def _cmd_encode(args) -> int:
    doc = _load_doc(args.config) if args.config else {}
    tcfg = _target_config(doc)
    paths = _scene_paths(args.scenes)
    _, canvas = formats.read_scene_file(paths[0])
    guide = make_guide_line(_GUIDES[args.guide], canvas, cx=args.cx, cy=args.cy)
    grid = GridSpec(canvas, args.stride)
    targets = _map_tasks(_encode_one,
                         [(p, canvas, guide, grid, tcfg) for p in paths],
                         args.jobs)
    meta = {"guide": {"kind": args.guide, "cx": args.cx, "cy": args.cy},
            "scenes": [p.name for p in paths]}
    formats.save_targets(args.out, targets, meta)
    print(f"encoded {len(targets)} scenes to {args.out}")
    return 0


def _cmd_decode(args) -> int:
    doc = _load_doc(args.config) if args.config else {}
    dcfg = _decoder_config(doc)
    targets, meta = formats.load_targets(args.targets)
    names = meta.get("scenes") or [f"scene{i:05d}.json" for i in range(len(targets))]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, t in zip(names, targets):
        decoded = decode_scene(t, dcfg)
        stem = name[:-5] if name.endswith(".json") else name
        formats.write_culane_file(out / f"{stem}.lines.txt",
                                  [Lane(d.points) for d in decoded])
    print(f"decoded {len(targets)} scenes to {out}")
    return 0


def _lane_file_id(path: Path) -> str:
    name = path.name
    for suffix in (".lines.txt", ".json"):
        if name.endswith(suffix):
            return name[:-len(suffix)]
    return path.stem


def _load_lane_dir(dir_path, canvas: CanvasDims | None):
    """Map id -> lanes for a directory of .lines.txt and/or scene .json."""
    root = Path(dir_path)
    found: dict[str, list[Lane]] = {}
    for p in sorted(root.iterdir()):
        if p.name == "config.json" or p.is_dir():
            continue
        if p.name.endswith(".lines.txt"):
            found[_lane_file_id(p)] = formats.read_culane_file(p)
        elif p.name.endswith(".json"):
            lanes, c = formats.read_scene_file(p)
            if canvas is not None and c != canvas:
                raise ParseError(f"{p.name}: canvas {c} differs from {canvas}")
            canvas = c
            found[_lane_file_id(p)] = lanes
    if not found:
        raise ParseError(f"no lane files under {root}")
    return found, canvas


def _paired_corpora(preds_dir, gts_dir, canvas):
    preds, canvas = _load_lane_dir(preds_dir, canvas)
    gts, canvas = _load_lane_dir(gts_dir, canvas)
    missing = sorted(set(preds) ^ set(gts))
    if missing:
        raise ParseError(f"prediction/ground-truth ids do not pair up: {missing[:5]}")
    ids = sorted(preds)
    return [preds[i] for i in ids], [gts[i] for i in ids], canvas


def _cmd_eval(args) -> int:
    cfg = EvalConfig(lane_width=args.width, iou_threshold=args.iou)
    canvas = _parse_canvas(args.canvas) if args.canvas else None
    pred_scenes, gt_scenes, canvas = _paired_corpora(args.preds, args.gts, canvas)
    if canvas is None:
        raise ParseError("canvas unknown: pass --canvas or use scene JSON ground truth")
    report = evaluate_corpus(pred_scenes, gt_scenes, cfg, canvas)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, ("metric", "value"), [
        ("scenes", str(len(gt_scenes))),
        ("tp", str(report.tp)),
        ("fp", str(report.fp)),
        ("fn", str(report.fn)),
        ("precision", _fmt(report.precision)),
        ("recall", _fmt(report.recall)),
        ("f1", _fmt(report.f1)),
    ])
    plots.save_metric_chart(out.with_suffix(".png"),
                            {"precision": report.precision,
                             "recall": report.recall,
                             "f1": report.f1})
    print(f"F1 {report.f1:.3f} (tp {report.tp}, fp {report.fp}, fn {report.fn})"
          f" -> {out}")
    return 0


def _cmd_angle_stats(args) -> int:
    edges = _parse_edges(args.edges)
    paths = _scene_paths(args.scenes)
    scenes = []
    canvas = None
    for p in paths:
        lanes, c = formats.read_scene_file(p)
        if canvas is not None and c != canvas:
            raise ParseError(f"{p.name}: canvas {c} differs from {canvas}")
        canvas = c
        scenes.append(lanes)
    guide = make_guide_line(_GUIDES[args.guide], canvas, cx=args.cx, cy=args.cy)
    counts = grazing_angle_histogram(scenes, guide, edges)
    recalls = None
    if args.preds:
        preds, _ = _load_lane_dir(args.preds, canvas)
        ids = [_lane_file_id(p) for p in paths]
        missing = sorted(set(ids) ^ set(preds))
        if missing:
            raise ParseError(f"prediction ids do not pair with scenes: {missing[:5]}")
        pred_scenes = [preds[i] for i in ids]
        recalls = angle_bucketed_recall(pred_scenes, scenes, guide,
                                        EvalConfig(), edges)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for b in range(len(edges) - 1):
        row = [f"{edges[b]:g}", f"{edges[b + 1]:g}", str(int(counts[b]))]
        if recalls is not None:
            row.append(_fmt(recalls[b]))
        rows.append(row)
    header = ["bucket_lo", "bucket_hi", "count"]
    if recalls is not None:
        header.append("recall")
    _write_csv(out, header, rows)
    series = {"lane count": [float(c) for c in counts]}
    plots.save_bucket_chart(out.with_suffix(".png"), edges, series, "lanes",
                            title=f"{args.guide} guide")
    if recalls is not None:
        plots.save_bucket_chart(out.with_name(out.stem + "_recall.png"), edges,
                                {"recall": recalls}, "recall",
                                title=f"{args.guide} guide")
    print(f"bucket counts {list(map(int, counts))} -> {out}")
    return 0


def _roundtrip_one(task):
    scfg, ncfg, tcfg, dcfg, guide, grid = task
    lanes = gen_scene(scfg)
    targets = corrupt_targets(encode_scene(lanes, guide, grid, tcfg), ncfg)
    return lanes, [Lane(d.points) for d in decode_scene(targets, dcfg)]


def _cmd_roundtrip(args) -> int:
    doc = _load_doc(args.config) if args.config else {}
    scfg = _scene_config(doc)
    tcfg = _target_config(doc)
    dcfg = _decoder_config(doc)
    ecfg = _eval_config(doc)
    ncfg = _noise_config(_load_doc(args.noise)) if args.noise else NoiseConfig()
    count = args.count if args.count is not None else int(doc.get("count", 20))
    edges = _parse_edges(args.edges)
    out_csv = Path(args.out)
    base = out_csv.parent
    (base / "scenes").mkdir(parents=True, exist_ok=True)
    (base / "preds").mkdir(parents=True, exist_ok=True)
    guide = make_guide_line(_GUIDES[args.guide], scfg.canvas, cx=args.cx, cy=args.cy)
    rect = make_guide_line(GuideKind.RECTANGLE, scfg.canvas)
    grid = GridSpec(scfg.canvas, args.stride)
    tasks = [(replace(scfg, seed=scfg.seed + i), replace(ncfg, seed=ncfg.seed + i),
              tcfg, dcfg, guide, grid) for i in range(count)]
    results = _map_tasks(_roundtrip_one, tasks, args.jobs)
    gt_scenes = [lanes for lanes, _ in results]
    pred_scenes = [decoded for _, decoded in results]
    for i, (lanes, decoded) in enumerate(results):
        formats.write_scene_file(base / "scenes" / f"scene{i:05d}.json",
                                 lanes, scfg.canvas)
        formats.write_culane_file(base / "preds" / f"scene{i:05d}.lines.txt",
                                  decoded)
    report = evaluate_corpus(pred_scenes, gt_scenes, ecfg, scfg.canvas)
    recalls = angle_bucketed_recall(pred_scenes, gt_scenes, rect, ecfg, edges)
    counts = grazing_angle_histogram(gt_scenes, rect, edges)
    _write_csv(out_csv, ("metric", "value"), [
        ("scenes", str(count)),
        ("tp", str(report.tp)),
        ("fp", str(report.fp)),
        ("fn", str(report.fn)),
        ("precision", _fmt(report.precision)),
        ("recall", _fmt(report.recall)),
        ("f1", _fmt(report.f1)),
    ])
    _write_csv(base / "buckets.csv", ("bucket_lo", "bucket_hi", "gt_count", "recall"),
               [(f"{edges[b]:g}", f"{edges[b + 1]:g}", str(int(counts[b])),
                 _fmt(recalls[b])) for b in range(len(edges) - 1)])
    plots.save_metric_chart(out_csv.with_suffix(".png"),
                            {"precision": report.precision,
                             "recall": report.recall,
                             "f1": report.f1})
    plots.save_bucket_chart(base / "buckets.png", edges, {"recall": recalls},
                            "recall", title=f"{args.guide} guide roundtrip")
    print(f"F1 {report.f1:.3f} over {count} scenes -> {out_csv}")
    return 0


# ----------------------------------------------------------------- main

def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="laneguide",
                                  description="lane geometry encode/decode toolkit")
    sub = top.add_subparsers(dest="command", required=True)

    def add_guide_args(p):
        p.add_argument("--guide", choices=sorted(_GUIDES), default="rect")
        p.add_argument("--cx", type=float, default=0.5)
        p.add_argument("--cy", type=float, default=0.4)

    p = sub.add_parser("synth", help="generate seeded synthetic scenes")
    p.add_argument("--config", help="JSON config (scene section)")
    p.add_argument("--count", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("encode", help="encode scenes into targets")
    p.add_argument("--scenes", required=True)
    add_guide_args(p)
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--config", help="JSON config (targets section)")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for per-scene encoding")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="decode targets into lane files")
    p.add_argument("--targets", required=True)
    p.add_argument("--config", help="JSON config (decoder section)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--preds", required=True)
    p.add_argument("--gts", required=True)
    p.add_argument("--width", type=float, default=30.0)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--canvas", help="WxH when ground truth has no canvas")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("angle-stats", help="grazing-angle bucket statistics")
    p.add_argument("--scenes", required=True)
    add_guide_args(p)
    p.add_argument("--edges", default="0,30,60,90")
    p.add_argument("--preds", help="optional predictions for per-bucket recall")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_angle_stats)

    p = sub.add_parser("roundtrip", help="full generate/encode/decode/eval run")
    p.add_argument("--config", help="JSON config (scene/targets/decoder/eval)")
    p.add_argument("--noise", help="JSON config (noise section)")
    add_guide_args(p)
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--count", type=int)
    p.add_argument("--edges", default="0,30,60,90")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for per-scene pipeline runs")
    p.add_argument("--out", required=True,
                   help="report CSV path; other artifacts land next to it")
    p.set_defaults(func=_cmd_roundtrip)

    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LaneGuideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cli(argv=None) -> int:
    """Run the command line and return its exit code."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
