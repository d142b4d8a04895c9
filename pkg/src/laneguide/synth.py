"""Seeded synthetic lane scenes and a noisy oracle-prediction corruptor.

Scenes are quadratic Bezier polylines sampled at sub-2px steps on a
fixed canvas.  Corner lanes leave through a side border low region at a
small angle to that border; horizontal lanes span the full width;
normal lanes rise from the bottom edge.  The corruptor degrades encoded
targets the way an imperfect predictor would: optional response
scattering along the guide direction, additive Gaussian noise, cell
dropout and box blur.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import DomainError
from .geometry import (
    CanvasDims,
    GuideKind,
    Lane,
    lane_origin,
    make_guide_line,
    response_range,
)
from .targets import Heatmap, TargetSet, stamp_gaussian

__all__ = [
    "RNG_ALGORITHM",
    "SceneConfig",
    "NoiseConfig",
    "gen_scene",
    "corrupt_targets",
]

# Pinned generator algorithm so corpora reproduce across ports.
RNG_ALGORITHM = "numpy-philox4x64"

_STEP = 1.5            # px between polyline samples, under the 2 px cap
_CORNER_TRIES = 40
_MIN_SPAN_ALPHA = 1.0  # deg; keeps the scattered-stamp span finite


@dataclass(frozen=True)
class SceneConfig:
    """Scene generator parameters; seed fully determines the output."""

    canvas: CanvasDims = CanvasDims(800, 320)
    lanes_min: int = 2
    lanes_max: int = 5
    curvature_max: float = 0.008
    corner_lane_fraction: float = 0.25
    horizontal_lane_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.lanes_min <= self.lanes_max:
            raise DomainError("lane counts must satisfy 0 <= lanes_min <= lanes_max")
        for name in ("corner_lane_fraction", "horizontal_lane_fraction"):
            f = getattr(self, name)
            if not 0.0 <= f <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1]")
        if self.corner_lane_fraction + self.horizontal_lane_fraction > 1.0:
            raise DomainError("lane-kind fractions must sum to at most 1")
        if self.curvature_max <= 0.0:
            raise DomainError("curvature_max must be positive")


@dataclass(frozen=True)
class NoiseConfig:
    """Target corruption amplitudes; all zero means the identity map.

    scatter spreads each keypoint stamp along its guide tangent in
    proportion to the lane's response range, modeling detections that
    smear along the guide at small grazing angles.
    """

    gaussian_sigma: float = 0.0
    dropout_prob: float = 0.0
    blur_radius: float = 0.0
    scatter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        amplitudes = (self.gaussian_sigma, self.dropout_prob,
                      self.blur_radius, self.scatter)
        if min(amplitudes) < 0.0:
            raise DomainError("noise amplitudes must be non-negative")
        if self.dropout_prob > 1.0:
            raise DomainError("dropout_prob must not exceed 1")

    @property
    def is_identity(self) -> bool:
        return (self.gaussian_sigma == 0.0 and self.dropout_prob == 0.0
                and self.blur_radius == 0.0 and self.scatter == 0.0)


def _bezier(p0, p1, p2, ts):
    ts = ts[:, None]
    return (1.0 - ts) ** 2 * p0 + 2.0 * ts * (1.0 - ts) * p1 + ts ** 2 * p2


def _bezier_polyline(p0, p1, p2) -> np.ndarray:
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    coarse = _bezier(p0, p1, p2, np.linspace(0.0, 1.0, 129))
    length = float(np.sum(np.linalg.norm(np.diff(coarse, axis=0), axis=1)))
    n = max(2, math.ceil(length / _STEP) + 1)
    pts = _bezier(p0, p1, p2, np.linspace(0.0, 1.0, n))
    while float(np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1))) > 2.0:
        n = 2 * n - 1
        pts = _bezier(p0, p1, p2, np.linspace(0.0, 1.0, n))
    return pts


def _max_curvature(p0, p1, p2) -> float:
    # kappa(t) = 4|d0 x d1| / |B'(t)|^3 with constant numerator; the
    # maximum sits where the quadratic |B'|^2 is smallest.
    d0 = np.asarray(p1, float) - np.asarray(p0, float)
    d1 = np.asarray(p2, float) - np.asarray(p1, float)
    cross = abs(d0[0] * d1[1] - d0[1] * d1[0])
    if cross < 1e-12:
        return 0.0
    e = d1 - d0
    ee = float(e @ e)
    t = 0.0 if ee == 0.0 else float(np.clip(-(d0 @ e) / ee, 0.0, 1.0))
    vmin = 2.0 * float(np.linalg.norm(d0 + t * e))
    if vmin < 1e-9:
        return math.inf
    return 4.0 * cross / vmin**3


def _inside(p, canvas: CanvasDims) -> bool:
    return 0.0 <= p[0] <= canvas.w and 0.0 <= p[1] <= canvas.h


def _bend_within_limits(p0, p1_of_bend, p2_of_bend, bend, cfg):
    # Halve the lateral bend until the control polygon stays inside the
    # canvas and the curvature cap holds; bend 0 always passes.
    for _ in range(20):
        p1, p2 = p1_of_bend(bend), p2_of_bend(bend)
        if (_inside(p1, cfg.canvas) and _inside(p2, cfg.canvas)
                and _max_curvature(p0, p1, p2) <= cfg.curvature_max):
            return p1, p2
        bend *= 0.5
    return p1_of_bend(0.0), p2_of_bend(0.0)


def _corner_lane(rng, cfg: SceneConfig, rect_guide) -> Lane:
    w, h = cfg.canvas.w, cfg.canvas.h
    p0 = tip = None
    for _ in range(_CORNER_TRIES):
        sx = 1.0 if rng.random() < 0.5 else -1.0
        x0 = 0.0 if sx > 0.0 else float(w)
        y0 = rng.uniform(0.55 * h, 0.95 * h)
        theta = math.radians(rng.uniform(6.0, 24.0))
        y_end = rng.uniform(0.08 * h, 0.32 * h)
        rho = (y0 - y_end) / math.cos(theta)
        u = np.array([sx * math.sin(theta), -math.cos(theta)])
        nvec = np.array([math.cos(theta), sx * math.sin(theta)])
        p0 = np.array([x0, y0])
        tip = p0 + rho * u
        p1 = p0 + rng.uniform(0.35, 0.65) * rho * u
        bend = rng.uniform(-0.12, 0.12) * rho
        _, p2 = _bend_within_limits(p0, lambda b: p1, lambda b: tip + b * nvec,
                                    bend, cfg)
        lane = Lane(_bezier_polyline(p0, p1, p2))
        if lane_origin(lane, rect_guide).alpha < 29.5:
            return lane
    # Straight lane at the last drawn tilt; its border angle is exact.
    return Lane([tuple(p0), tuple(tip)])


def _normal_lane(rng, cfg: SceneConfig) -> Lane:
    w, h = cfg.canvas.w, cfg.canvas.h
    x0 = rng.uniform(0.06 * w, 0.94 * w)
    y_end = rng.uniform(0.10 * h, 0.50 * h)
    tilt = math.radians(rng.uniform(-45.0, 45.0))
    dy = h - y_end
    x_end = x0 + dy * math.tan(tilt)
    if not 0.02 * w <= x_end <= 0.98 * w:
        x_end = x0 - dy * math.tan(tilt)
    x_end = float(np.clip(x_end, 0.02 * w, 0.98 * w))
    p0 = np.array([x0, float(h)])
    p2 = np.array([x_end, y_end])
    chord = p2 - p0
    ln = float(np.linalg.norm(chord))
    nvec = np.array([-chord[1], chord[0]]) / ln
    mid = 0.5 * (p0 + p2)
    bend = rng.uniform(-0.12, 0.12) * ln
    p1, _ = _bend_within_limits(p0, lambda b: mid + b * nvec, lambda b: p2,
                                bend, cfg)
    return Lane(_bezier_polyline(p0, p1, p2))


def _horizontal_lane(rng, cfg: SceneConfig) -> Lane:
    w, h = cfg.canvas.w, cfg.canvas.h
    y0 = rng.uniform(0.20 * h, 0.72 * h)
    y1 = float(np.clip(y0 + rng.uniform(-0.12 * h, 0.12 * h), 0.05 * h, 0.90 * h))
    p0 = np.array([0.0, y0])
    p2 = np.array([float(w), y1])
    mid = 0.5 * (p0 + p2)
    bend = rng.uniform(-0.10 * h, 0.10 * h)
    p1, _ = _bend_within_limits(p0, lambda b: mid + np.array([0.0, b]),
                                lambda b: p2, bend, cfg)
    return Lane(_bezier_polyline(p0, p1, p2))


def gen_scene(cfg: SceneConfig) -> list[Lane]:
    """Generate one scene's lanes, a pure function of the config.

    Lane count is uniform on [lanes_min, lanes_max]; corner and
    horizontal counts are the rounded fractions of it (corner first,
    horizontal clipped to what remains).  Corner lanes are re-drawn
    until their border angle is below 30 degrees, with a straight-lane
    fallback, so the guarantee is unconditional.
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    n = int(rng.integers(cfg.lanes_min, cfg.lanes_max + 1))
    if n == 0:
        return []
    n_corner = round(cfg.corner_lane_fraction * n)
    n_horiz = min(round(cfg.horizontal_lane_fraction * n), n - n_corner)
    rect_guide = make_guide_line(GuideKind.RECTANGLE, cfg.canvas)
    lanes = [_corner_lane(rng, cfg, rect_guide) for _ in range(n_corner)]
    lanes += [_horizontal_lane(rng, cfg) for _ in range(n_horiz)]
    lanes += [_normal_lane(rng, cfg) for _ in range(n - n_corner - n_horiz)]
    return lanes


def _degrade(values: np.ndarray, noise: NoiseConfig, rng) -> np.ndarray:
    out = values.astype(float, copy=True)
    if noise.gaussian_sigma > 0.0:
        out = np.clip(out + rng.normal(0.0, noise.gaussian_sigma, out.shape),
                      0.0, None)
    if noise.dropout_prob > 0.0:
        out[rng.random(out.shape) < noise.dropout_prob] = 0.0
    if noise.blur_radius > 0.0:
        size = 2 * int(round(noise.blur_radius)) + 1
        if size > 1:
            out = np.clip(uniform_filter(out, size=size, mode="constant"),
                          0.0, None)
    return out


def _scattered_keypoints(t: TargetSet) -> tuple:
    # Per-instance span in grid cells over which the origin response
    # smears; grows as the grazing angle shrinks.
    def span(rec):
        alpha = max(rec.alpha, _MIN_SPAN_ALPHA)
        return response_range(t.cfg.d, alpha) / t.keypoints.grid.stride
    return tuple(span(rec) for rec, _ in t.instances)


def corrupt_targets(t: TargetSet, noise: NoiseConfig) -> TargetSet:
    """Degrade a target set the way an imperfect predictor would.

    Stage order: scatter rebuilds the keypoint stamps as anisotropic
    Gaussians elongated along each origin's guide tangent (spread grows
    with scatter times half the response range); then Gaussian noise
    (clamped at 0), dropout and box blur hit the keypoint map first and
    each instance mask in order.  Offsets pass through untouched.  An
    all-zero config returns the input unchanged.
    """
    if noise.is_identity:
        return t
    rng = np.random.Generator(np.random.Philox(noise.seed))
    grid = t.keypoints.grid
    if noise.scatter > 0.0:
        kp = np.zeros_like(t.keypoints.values)
        cfg = t.cfg
        for (rec, _), span in zip(t.instances, _scattered_keypoints(t)):
            gx = float(rec.origin[0]) / grid.stride
            gy = float(rec.origin[1]) / grid.stride
            s_along = math.hypot(cfg.sigma, noise.scatter * span / 2.0)
            radius = cfg.kernel_radius_sigmas * s_along
            stamp_gaussian(kp, gx, gy, s_along, cfg.sigma, radius,
                           axis_u=rec.guide_tangent)
    else:
        kp = t.keypoints.values
    keypoints = Heatmap(grid, _degrade(kp, noise, rng))
    instances = tuple((rec, Heatmap(grid, _degrade(mask.values, noise, rng)))
                      for rec, mask in t.instances)
    return TargetSet(keypoints, t.offsets, instances, t.cfg)
