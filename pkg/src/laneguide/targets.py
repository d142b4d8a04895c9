"""Dense training-target encoding on a downsampled grid.

Lane origins become sum-normalized Gaussian stamps on a keypoint heatmap
plus sub-cell offsets at the stamped cell; whole lanes become peak-1
Gaussian distance bands (instance masks).  Grid cell (r, c) covers image
pixels [c*stride, (c+1)*stride) x [r*stride, (r+1)*stride) and is
sampled at its center (c + 0.5, r + 0.5) in continuous grid coordinates
gx = x / stride, gy = y / stride.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import CanvasDims, GuideLine, Lane, OriginRecord, lane_origin

_STRIDES = (1, 2, 4, 8, 16)


@dataclass(frozen=True)
class GridSpec:
    """Downsampled grid over a canvas; dims round up to cover it fully."""

    canvas: CanvasDims
    stride: int = 8

    def __post_init__(self):
        if self.stride not in _STRIDES:
            raise DomainError(f"stride must be one of {_STRIDES}, got {self.stride}")

    @property
    def gw(self) -> int:
        return -(-self.canvas.w // self.stride)

    @property
    def gh(self) -> int:
        return -(-self.canvas.h // self.stride)


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Non-negative activation map on a grid; values treated as immutable."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.shape != (self.grid.gh, self.grid.gw):
            raise DomainError(f"heatmap shape {v.shape} does not match grid {self.grid.gh}x{self.grid.gw}")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise DomainError("heatmap values must be finite and non-negative")


@dataclass(frozen=True, eq=False)
class OffsetMaps:
    """Sub-cell origin residuals, valid only where valid_mask is set."""

    grid: GridSpec
    dx: np.ndarray
    dy: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        shape = (self.grid.gh, self.grid.gw)
        for arr in (self.dx, self.dy, self.valid_mask):
            if arr.shape != shape:
                raise DomainError("offset map shape does not match grid")
        if np.any(np.abs(self.dx[self.valid_mask]) > 1.0) or np.any(np.abs(self.dy[self.valid_mask]) > 1.0):
            raise DomainError("valid offsets must not exceed one cell")


@dataclass(frozen=True)
class TargetConfig:
    """Encoding constants.

    sigma: keypoint stamp spread in grid cells; d: lane band radius in
    image px; kernel_radius_sigmas: truncation radius as a multiple of
    the relevant spread.
    """

    sigma: float = 1.5
    d: float = 4.0
    kernel_radius_sigmas: float = 3.0

    def __post_init__(self):
        if self.sigma <= 0.0 or self.d <= 0.0 or self.kernel_radius_sigmas <= 0.0:
            raise DomainError("sigma, d and kernel_radius_sigmas must be positive")


@dataclass(frozen=True, eq=False)
class TargetSet:
    """Everything encoded for one scene.

    instances pairs each origin record with its lane's mask, in lane
    order; cfg is kept so downstream corruption can rebuild stamps.
    """

    keypoints: Heatmap
    offsets: OffsetMaps
    instances: tuple
    cfg: TargetConfig = field(default_factory=TargetConfig)


def _require_inside(x: float, y: float, canvas: CanvasDims):
    if not (0.0 <= x <= canvas.w and 0.0 <= y <= canvas.h):
        raise DomainError(f"point ({x}, {y}) lies outside the {canvas.w}x{canvas.h} canvas")


def _stamp_window(center: float, radius: float, size: int) -> tuple[int, int]:
    # Indices whose cell centers fall within [center-radius, center+radius].
    lo = max(0, math.ceil(center - radius - 0.5))
    hi = min(size - 1, math.floor(center + radius - 0.5))
    return lo, hi


def stamp_gaussian(values: np.ndarray, gx: float, gy: float,
                   sigma_x: float, sigma_y: float, radius: float,
                   axis_u=None) -> None:
    """Max-combine one sum-normalized Gaussian stamp into `values`.

    The window is the cells whose centers lie within `radius` of
    (gx, gy) along both axes, clipped to the grid; the stamp is
    normalized to unit mass over the cells actually written.  When
    axis_u is given the kernel is oriented along that unit direction
    with spread sigma_x, and sigma_y across it.
    """
    gh, gw = values.shape
    c_lo, c_hi = _stamp_window(gx, radius, gw)
    r_lo, r_hi = _stamp_window(gy, radius, gh)
    if c_lo > c_hi or r_lo > r_hi:
        c_lo = c_hi = min(max(int(math.floor(gx)), 0), gw - 1)
        r_lo = r_hi = min(max(int(math.floor(gy)), 0), gh - 1)
    cc = np.arange(c_lo, c_hi + 1, dtype=float) + 0.5 - gx
    rr = np.arange(r_lo, r_hi + 1, dtype=float) + 0.5 - gy
    du_x, du_y = cc[None, :], rr[:, None]
    if axis_u is None:
        w = np.exp(-(du_x**2) / (2.0 * sigma_x**2) - (du_y**2) / (2.0 * sigma_y**2))
    else:
        ux, uy = float(axis_u[0]), float(axis_u[1])
        along = du_x * ux + du_y * uy
        across = -du_x * uy + du_y * ux
        w = np.exp(-(along**2) / (2.0 * sigma_x**2) - (across**2) / (2.0 * sigma_y**2))
    w /= w.sum()
    region = values[r_lo:r_hi + 1, c_lo:c_hi + 1]
    np.maximum(region, w, out=region)


def encode_keypoints(origins, grid: GridSpec, cfg: TargetConfig) -> tuple[Heatmap, OffsetMaps]:
    """Stamp origin keypoints and record their sub-cell offsets.

    Each origin stamps a sum-normalized isotropic Gaussian of spread
    cfg.sigma (cells), truncated at kernel_radius_sigmas * sigma;
    overlapping stamps combine by element-wise max.  The cell containing
    the origin stores the residual of the origin from that cell's
    center, in cell units; if several origins share a cell the last one
    wins.  Raises DomainError for an origin outside the canvas.
    """
    gh, gw = grid.gh, grid.gw
    values = np.zeros((gh, gw))
    dx = np.zeros((gh, gw))
    dy = np.zeros((gh, gw))
    valid = np.zeros((gh, gw), dtype=bool)
    radius = cfg.kernel_radius_sigmas * cfg.sigma
    for rec in origins:
        x, y = float(rec.origin[0]), float(rec.origin[1])
        _require_inside(x, y, grid.canvas)
        gx, gy = x / grid.stride, y / grid.stride
        stamp_gaussian(values, gx, gy, cfg.sigma, cfg.sigma, radius)
        c0 = min(max(int(math.floor(gx)), 0), gw - 1)
        r0 = min(max(int(math.floor(gy)), 0), gh - 1)
        dx[r0, c0] = gx - (c0 + 0.5)
        dy[r0, c0] = gy - (r0 + 0.5)
        valid[r0, c0] = True
    return Heatmap(grid, values), OffsetMaps(grid, dx, dy, valid)


def encode_instance_mask(lane: Lane, grid: GridSpec, cfg: TargetConfig) -> Heatmap:
    """Encode one lane as a peak-1 Gaussian distance band.

    Cell value = exp(-rho^2 / (2 * (d/stride)^2)) with rho the distance
    in grid cells from the cell center to the nearest point of the lane
    polyline; zero beyond kernel_radius_sigmas * (d/stride).
    """
    for x, y in lane.points:
        _require_inside(float(x), float(y), grid.canvas)
    gh, gw = grid.gh, grid.gw
    s = cfg.d / grid.stride
    radius = cfg.kernel_radius_sigmas * s
    poly = lane.points / grid.stride
    d2 = np.full((gh, gw), np.inf)
    margin = radius + 1.0
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
    values = np.zeros((gh, gw))
    near = d2 <= radius * radius
    values[near] = np.exp(-d2[near] / (2.0 * s * s))
    return Heatmap(grid, values)


def encode_scene(lanes, g: GuideLine, grid: GridSpec, cfg: TargetConfig) -> TargetSet:
    """Encode a scene's lanes against a guide line.

    Composes lane_origin, encode_keypoints and encode_instance_mask;
    instances keep lane order.  An empty scene encodes to all-zero maps.
    """
    if grid.canvas != g.canvas:
        raise DomainError("grid and guide line must share a canvas")
    origins: list[OriginRecord] = [lane_origin(lane, g) for lane in lanes]
    keypoints, offsets = encode_keypoints(origins, grid, cfg)
    instances = tuple(
        (rec, encode_instance_mask(lane, grid, cfg)) for rec, lane in zip(origins, lanes)
    )
    return TargetSet(keypoints, offsets, instances, cfg)
