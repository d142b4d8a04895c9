"""Adaptive decoding of lane targets back to polylines.

Instance masks are cut along whichever axis the activation spreads
least: near-vertical lanes are decoded row by row, near-horizontal ones
column by column.  Each qualifying cut contributes one anchor whose
sub-cell position is a soft-argmax around the cut's maximum; short gaps
are bridged by linear interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, EmptyMask, TooFewAnchors
from .targets import Heatmap, OffsetMaps, TargetSet

_GAP_BRIDGE = 2  # rows/cols of missing anchors bridged inside a run


class Orientation(Enum):
    ROW_WISE = "row"
    COL_WISE = "col"


@dataclass(frozen=True)
class DecoderConfig:
    """Decoding thresholds and windows.

    peak_threshold and mask_threshold are activation units in (0, 1);
    anchor_window is the soft-argmax half-width in cells around a cut's
    maximum; peak_match_radius (cells) is how far a detected keypoint may
    sit from an instance's origin and still activate that instance.
    """

    peak_threshold: float = 0.02
    max_instances: int = 16
    mask_threshold: float = math.exp(-0.5)
    anchor_window: int = 3
    min_anchor_count: int = 2
    orientation_tiebreak: Orientation = Orientation.ROW_WISE
    peak_match_radius: float = 3.0

    def __post_init__(self):
        if not (0.0 < self.peak_threshold < 1.0 and 0.0 < self.mask_threshold < 1.0):
            raise DomainError("thresholds must lie in (0, 1)")
        if self.max_instances < 1 or self.anchor_window < 1 or self.min_anchor_count < 2:
            raise DomainError("max_instances/anchor_window must be >= 1, min_anchor_count >= 2")
        if self.peak_match_radius <= 0.0:
            raise DomainError("peak_match_radius must be positive")


@dataclass(frozen=True, eq=False)
class DecodedLane:
    """A decoded polyline with its decoding provenance.

    points: (N, 2) sub-pixel image px ordered along the anchor axis;
    score: mean activation of the qualifying anchors; anchor_range:
    first and last anchor index (grid cells) of the decoded run.
    """

    points: np.ndarray
    orientation: Orientation
    score: float
    anchor_range: tuple[int, int]


def extract_peaks(keypoints: Heatmap, offsets: OffsetMaps, cfg: DecoderConfig):
    """Detect origin keypoints.

    Returns [(position_px, score)] for cells that are strict maxima of
    their 3x3 neighborhood and reach peak_threshold, strongest first
    (ties broken by row, then column), at most max_instances.  Positions
    are refined by the sub-cell offsets where the peak cell carries one.
    """
    v = keypoints.values
    gh, gw = v.shape
    padded = np.pad(v, 1, constant_values=-np.inf)
    strict = np.ones(v.shape, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            strict &= v > padded[1 + dr:1 + dr + gh, 1 + dc:1 + dc + gw]
    rows, cols = np.nonzero(strict & (v >= cfg.peak_threshold))
    ranked = sorted(zip(rows.tolist(), cols.tolist()), key=lambda rc: (-v[rc], rc[0], rc[1]))
    stride = keypoints.grid.stride
    peaks = []
    for r, c in ranked[: cfg.max_instances]:
        if offsets.valid_mask[r, c]:
            pos = np.array([(c + 0.5 + offsets.dx[r, c]) * stride,
                            (r + 0.5 + offsets.dy[r, c]) * stride])
        else:
            pos = np.array([(c + 0.5) * stride, (r + 0.5) * stride])
        peaks.append((pos, float(v[r, c])))
    return peaks


def choose_orientation(mask: Heatmap, cfg: DecoderConfig) -> Orientation:
    """Pick the decoding axis from activation-weighted second moments.

    Cells at or above mask_threshold vote with their activation; the
    lane is decoded row-wise when the vertical spread m_yy is at least
    the horizontal spread m_xx (ties go to orientation_tiebreak).
    Raises EmptyMask when nothing reaches the threshold.
    """
    v = mask.values
    sel = v >= cfg.mask_threshold
    if not sel.any():
        raise EmptyMask("no cell reaches the mask threshold")
    w = v[sel]
    ys, xs = np.nonzero(sel)
    total = w.sum()
    mx = (w * xs).sum() / total
    my = (w * ys).sum() / total
    m_xx = (w * (xs - mx) ** 2).sum() / total
    m_yy = (w * (ys - my) ** 2).sum() / total
    if m_yy > m_xx:
        return Orientation.ROW_WISE
    if m_xx > m_yy:
        return Orientation.COL_WISE
    return cfg.orientation_tiebreak


def _runs(anchor_rows: list[int]):
    runs = [[anchor_rows[0]]]
    for r in anchor_rows[1:]:
        if r - runs[-1][-1] <= _GAP_BRIDGE + 1:
            runs[-1].append(r)
        else:
            runs.append([r])
    return runs


def decode_instance(mask: Heatmap, orientation: Orientation, cfg: DecoderConfig) -> DecodedLane:
    """Decode one instance mask into a polyline.

    Every row (column) whose maximum reaches mask_threshold yields an
    anchor at the soft-argmax of activation over +-anchor_window cells
    around that maximum.  The decoded run is the largest set of
    qualifying anchors whose gaps are at most two cells; gap cells are
    filled by linear interpolation.  Raises TooFewAnchors when the run
    holds fewer than min_anchor_count qualifying anchors.
    """
    row_wise = orientation is Orientation.ROW_WISE
    v = mask.values if row_wise else mask.values.T
    n_anchor, n_cross = v.shape
    maxima = v.max(axis=1)
    qualifying = np.nonzero(maxima >= cfg.mask_threshold)[0]
    if qualifying.size < cfg.min_anchor_count:
        raise TooFewAnchors(f"{qualifying.size} qualifying anchors")
    runs = _runs(qualifying.tolist())
    run = max(runs, key=len)
    if len(run) < cfg.min_anchor_count:
        raise TooFewAnchors(f"largest run holds {len(run)} anchors")

    positions: dict[int, float] = {}
    for r in run:
        c_star = int(np.argmax(v[r]))
        lo = max(0, c_star - cfg.anchor_window)
        hi = min(n_cross - 1, c_star + cfg.anchor_window)
        w = v[r, lo:hi + 1]
        positions[r] = float((w * (np.arange(lo, hi + 1) + 0.5)).sum() / w.sum())

    stride = mask.grid.stride
    points = []
    prev = None
    for r in run:
        if prev is not None and r - prev > 1:
            x0, x1 = positions[prev], positions[r]
            for rr in range(prev + 1, r):
                frac = (rr - prev) / (r - prev)
                points.append((rr, x0 + frac * (x1 - x0)))
        points.append((r, positions[r]))
        prev = r
    pts = np.empty((len(points), 2))
    for i, (r, pos) in enumerate(points):
        along = (r + 0.5) * stride
        across = pos * stride
        pts[i] = (across, along) if row_wise else (along, across)
    score = float(np.mean([v[r].max() for r in run]))
    return DecodedLane(pts, orientation, score, (run[0], run[-1]))


def decode_scene(targets: TargetSet, cfg: DecoderConfig):
    """Decode every detected instance of a target set.

    A detected keypoint activates the instance whose origin lies within
    peak_match_radius cells of it (the oracle pairing: masks come with
    their instances, detection only gates them).  Instances whose mask
    fails to decode are dropped, not errors.
    """
    peaks = extract_peaks(targets.keypoints, targets.offsets, cfg)
    stride = targets.keypoints.grid.stride
    radius_px = cfg.peak_match_radius * stride
    decoded = []
    for rec, mask in targets.instances:
        if not any(np.linalg.norm(pos - rec.origin) <= radius_px for pos, _ in peaks):
            continue
        try:
            orientation = choose_orientation(mask, cfg)
            decoded.append(decode_instance(mask, orientation, cfg))
        except (EmptyMask, TooFewAnchors):
            continue
    return decoded
