"""IoU/F1 lane matching and grazing-angle-bucketed recall reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError
from .geometry import (
    CanvasDims,
    GuideLine,
    Lane,
    bucket_index,
    check_bucket_edges,
    lane_origin,
)

__all__ = [
    "EvalConfig",
    "MatchReport",
    "rasterize_lane",
    "lane_iou",
    "hungarian_match",
    "evaluate",
    "evaluate_corpus",
    "angle_bucketed_recall",
]


@dataclass(frozen=True)
class EvalConfig:
    """Matching parameters following the CULane evaluation convention."""

    lane_width: float = 30.0
    iou_threshold: float = 0.5
    raster_scale: float = 1.0

    def __post_init__(self):
        if self.lane_width < 1.0:
            raise DomainError(f"lane_width must be >= 1 px, got {self.lane_width}")
        if not (0.0 < self.iou_threshold < 1.0):
            raise DomainError(f"iou_threshold must lie in (0, 1), got {self.iou_threshold}")
        if self.raster_scale < 1.0:
            raise DomainError(f"raster_scale must be >= 1, got {self.raster_scale}")


@dataclass(frozen=True, eq=False)
class MatchReport:
    """Counts and metrics of one prediction-vs-ground-truth matching."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    per_pair_iou: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    assignment: tuple = ()

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int,
                    per_pair_iou=None, assignment=()) -> "MatchReport":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        if per_pair_iou is None:
            per_pair_iou = np.zeros((0, 0))
        return cls(tp, fp, fn, precision, recall, f1,
                   np.asarray(per_pair_iou, dtype=float), tuple(assignment))


def rasterize_lane(lane: Lane, width: float, canvas: CanvasDims,
                   scale: float = 1.0) -> np.ndarray:
    """Boolean grid of cells whose centers lie within width/2 of the lane.

    Cells are scale x scale px; the grid covers the canvas, so the band
    is implicitly clipped to it.
    """
    gw = math.ceil(canvas.w / scale)
    gh = math.ceil(canvas.h / scale)
    half = (width / 2.0) / scale
    poly = lane.points / scale
    d2 = np.full((gh, gw), np.inf)
    margin = half + 1.0
    for i in range(poly.shape[0] - 1):
        ax, ay = poly[i]
        bx, by = poly[i + 1]
        c_lo = max(0, math.floor(min(ax, bx) - margin))
        c_hi = min(gw - 1, math.ceil(max(ax, bx) + margin))
        r_lo = max(0, math.floor(min(ay, by) - margin))
        r_hi = min(gh - 1, math.ceil(max(ay, by) + margin))
        if c_lo > c_hi or r_lo > r_hi:
            continue
        cc = np.arange(c_lo, c_hi + 1, dtype=float) + 0.5
        rr = np.arange(r_lo, r_hi + 1, dtype=float) + 0.5
        ex, ey = bx - ax, by - ay
        dd = ex * ex + ey * ey
        px = cc[None, :] - ax
        py = rr[:, None] - ay
        t = np.clip((px * ex + py * ey) / dd, 0.0, 1.0)
        qx = px - t * ex
        qy = py - t * ey
        win = d2[r_lo:r_hi + 1, c_lo:c_hi + 1]
        np.minimum(win, qx * qx + qy * qy, out=win)
    return d2 <= half * half


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(a & b)) / union


def lane_iou(a: Lane, b: Lane, cfg: EvalConfig, canvas: CanvasDims) -> float:
    """Intersection over union of the two rasterized lane bands."""
    ra = rasterize_lane(a, cfg.lane_width, canvas, cfg.raster_scale)
    rb = rasterize_lane(b, cfg.lane_width, canvas, cfg.raster_scale)
    return _mask_iou(ra, rb)


def hungarian_match(cost) -> list[tuple[int, int]]:
    """Assignment of rows to columns minimizing total cost.

    Rectangular matrices pair up min(n_rows, n_cols) entries; an empty
    matrix yields an empty assignment.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist()))


def _iou_matrix(preds, gts, cfg: EvalConfig, canvas: CanvasDims) -> np.ndarray:
    pred_masks = [rasterize_lane(p, cfg.lane_width, canvas, cfg.raster_scale) for p in preds]
    gt_masks = [rasterize_lane(g, cfg.lane_width, canvas, cfg.raster_scale) for g in gts]
    iou = np.zeros((len(preds), len(gts)))
    for i, pm in enumerate(pred_masks):
        for j, gm in enumerate(gt_masks):
            iou[i, j] = _mask_iou(pm, gm)
    return iou


def _accepted_pairs(iou: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    pairs = hungarian_match(1.0 - iou)
    return [(i, j) for i, j in pairs if iou[i, j] >= threshold]


def evaluate(preds, gts, cfg: EvalConfig, canvas: CanvasDims) -> MatchReport:
    """Match predicted lanes to ground truth and score the result.

    Optimal assignment on (1 - IoU) cost; pairs below iou_threshold are
    discarded after assignment.  tp = accepted pairs, fp = unmatched
    predictions, fn = unmatched ground truths.
    """
    iou = _iou_matrix(preds, gts, cfg, canvas)
    accepted = _accepted_pairs(iou, cfg.iou_threshold)
    tp = len(accepted)
    return MatchReport.from_counts(tp, len(preds) - tp, len(gts) - tp, iou, accepted)


def evaluate_corpus(pred_scenes, gt_scenes, cfg: EvalConfig,
                    canvas: CanvasDims) -> MatchReport:
    """Evaluate scene pairs independently and sum the counts."""
    pred_scenes = list(pred_scenes)
    gt_scenes = list(gt_scenes)
    if len(pred_scenes) != len(gt_scenes):
        raise DomainError("prediction and ground-truth corpora differ in scene count")
    tp = fp = fn = 0
    for preds, gts in zip(pred_scenes, gt_scenes):
        report = evaluate(preds, gts, cfg, canvas)
        tp += report.tp
        fp += report.fp
        fn += report.fn
    return MatchReport.from_counts(tp, fp, fn)


def angle_bucketed_recall(preds, gts, g: GuideLine, cfg: EvalConfig,
                          edges) -> list[float]:
    """Recall per grazing-angle bucket of the ground-truth lanes.

    `preds` and `gts` are parallel corpora (lists of per-scene lane
    lists); a single scene may be passed as a plain lane list.  Each GT
    lane is bucketed by its grazing angle against `g`, scenes are
    matched independently, and hits are aggregated corpus-wide.  Empty
    buckets report NaN.
    """
    edge_arr = check_bucket_edges(edges)
    if preds and isinstance(preds[0], Lane):
        preds = [preds]
    if gts and isinstance(gts[0], Lane):
        gts = [gts]
    pred_scenes = list(preds)
    gt_scenes = list(gts)
    if len(pred_scenes) != len(gt_scenes):
        raise DomainError("prediction and ground-truth corpora differ in scene count")
    nb = edge_arr.size - 1
    total = np.zeros(nb, dtype=int)
    hits = np.zeros(nb, dtype=int)
    for scene_preds, scene_gts in zip(pred_scenes, gt_scenes):
        iou = _iou_matrix(scene_preds, scene_gts, cfg, g.canvas)
        matched = {j for _, j in _accepted_pairs(iou, cfg.iou_threshold)}
        for j, lane in enumerate(scene_gts):
            b = bucket_index(edge_arr, lane_origin(lane, g).alpha)
            total[b] += 1
            if j in matched:
                hits[b] += 1
    return [hits[b] / total[b] if total[b] else math.nan for b in range(nb)]
