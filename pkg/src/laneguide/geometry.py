"""Guide-line geometry for anchoring lanes in an image.

A guide line is a curve along the image support from which lane origins
are measured: either the full rectangular image border, or a U-shaped
curve whose bottom is an elliptical arc dipping below the side borders.
Lane origins are found by walking the lane polyline from its bottom-most
endpoint until it first crosses the guide line.  The grazing angle
between the lane and the guide tangent at the origin controls how far
the origin response spreads along the guide direction.

Coordinates are image pixels: x grows rightward, y grows downward, so
the image bottom edge is y = h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from .errors import DomainError

_MIN_CANVAS = 8
_PARAM_EPS = 1e-9
_ARC_TABLE = 2049


@dataclass(frozen=True)
class CanvasDims:
    """Image dimensions in pixels."""

    w: int
    h: int

    def __post_init__(self):
        if self.w < _MIN_CANVAS or self.h < _MIN_CANVAS:
            raise DomainError(f"canvas must be at least {_MIN_CANVAS}x{_MIN_CANVAS}, got {self.w}x{self.h}")


class GuideKind(Enum):
    RECTANGLE = "rectangle"
    CURVED = "curved"


class Lane:
    """An open polyline of sub-pixel image points.

    Points are stored from the endpoint nearest the image bottom edge
    outward; construction reverses the input if needed.  At least two
    points are required and consecutive points must be distinct.
    """

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise DomainError("a lane needs at least two (x, y) points")
        if not np.all(np.isfinite(pts)):
            raise DomainError("lane points must be finite")
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(steps == 0.0):
            raise DomainError("consecutive lane points must be distinct")
        if pts[0, 1] < pts[-1, 1]:
            pts = pts[::-1]
        self.points = np.ascontiguousarray(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        p0, p1 = self.points[0], self.points[-1]
        return f"Lane({len(self)} pts, ({p0[0]:.1f},{p0[1]:.1f})->({p1[0]:.1f},{p1[1]:.1f}))"


def segment_point_distance(points: np.ndarray, a, b) -> np.ndarray:
    """Distance from each of `points` (N,2) to the segment a-b."""
    pts = np.asarray(points, dtype=float)
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    dd = float(d @ d)
    if dd == 0.0:
        return np.linalg.norm(pts - a, axis=-1)
    t = np.clip(((pts - a) @ d) / dd, 0.0, 1.0)
    proj = a + t[..., None] * d
    return np.linalg.norm(pts - proj, axis=-1)


def polyline_point_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each of `points` (N,2) to the nearest point of a polyline (M,2)."""
    poly = np.asarray(polyline, dtype=float)
    if poly.ndim != 2 or poly.shape[0] < 2:
        raise DomainError("polyline needs at least two points")
    best = np.full(np.asarray(points).shape[:-1], np.inf)
    for i in range(poly.shape[0] - 1):
        best = np.minimum(best, segment_point_distance(points, poly[i], poly[i + 1]))
    return best


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.hypot(v[0], v[1]))
    if n == 0.0:
        raise DomainError("zero-length direction")
    return v / n


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _fold_angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two unit directions folded into [0, 90] degrees."""
    d = min(1.0, abs(float(u @ v)))
    return math.degrees(math.acos(d))


class _LineSeg:
    """Straight border piece, parameterized by arc length from its start."""

    __slots__ = ("p0", "p1", "t0", "length", "direction")

    def __init__(self, p0, p1, t0: float):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        self.t0 = float(t0)
        d = self.p1 - self.p0
        self.length = float(np.hypot(d[0], d[1]))
        self.direction = d / self.length

    def point_tangent(self, s: float):
        s = min(max(s, 0.0), self.length)
        return self.p0 + s * self.direction, self.direction.copy()

    def intersections(self, q0: np.ndarray, dq: np.ndarray):
        dp = self.p1 - self.p0
        denom = _cross2(dq, dp)
        scale = float(np.hypot(*dq)) * self.length
        if abs(denom) <= 1e-12 * scale:
            return []
        rhs = self.p0 - q0
        s = _cross2(rhs, dp) / denom
        u = _cross2(rhs, dq) / denom
        if not (-_PARAM_EPS <= s <= 1.0 + _PARAM_EPS and -_PARAM_EPS <= u <= 1.0 + _PARAM_EPS):
            return []
        s = min(max(s, 0.0), 1.0)
        u = min(max(u, 0.0), 1.0)
        return [(s, q0 + s * dq, self.t0 + u * self.length, self.direction.copy())]

    def nearest(self, p: np.ndarray):
        dp = self.p1 - self.p0
        u = float(np.clip(((p - self.p0) @ dp) / (self.length**2), 0.0, 1.0))
        q = self.p0 + u * dp
        return float(np.linalg.norm(p - q)), q, self.t0 + u * self.length, self.direction.copy()


class _ArcSeg:
    """Elliptical arc, arc-length parameterized via a cumulative table.

    The arc is the locus center + (a*cos(theta), b*sin(theta)) with theta
    running monotonically from th0 to th1; its own implicit equation
    ((x-cx)/a)^2 + ((y-cy)/b)^2 = 1 is the segment's defining equation.
    """

    __slots__ = ("center", "a", "b", "th0", "th1", "t0", "length", "_tau", "_s")

    def __init__(self, center, a: float, b: float, th0: float, th1: float, t0: float):
        self.center = np.asarray(center, dtype=float)
        self.a = float(a)
        self.b = float(b)
        self.th0 = float(th0)
        self.th1 = float(th1)
        self.t0 = float(t0)
        tau = np.linspace(0.0, 1.0, _ARC_TABLE)
        theta = self.th0 + tau * (self.th1 - self.th0)
        speed = np.hypot(self.a * np.sin(theta), self.b * np.cos(theta)) * abs(self.th1 - self.th0)
        s = cumulative_trapezoid(speed, tau, initial=0.0)
        self._tau = tau
        self._s = s
        self.length = float(s[-1])

    def _theta(self, tau: float) -> float:
        return self.th0 + tau * (self.th1 - self.th0)

    def _point_at_tau(self, tau: float) -> np.ndarray:
        th = self._theta(tau)
        return self.center + np.array([self.a * math.cos(th), self.b * math.sin(th)])

    def _tangent_at_tau(self, tau: float) -> np.ndarray:
        th = self._theta(tau)
        v = np.array([-self.a * math.sin(th), self.b * math.cos(th)])
        if self.th1 < self.th0:
            v = -v
        return _unit(v)

    def point_tangent(self, s: float):
        s = min(max(s, 0.0), self.length)
        tau = float(np.interp(s, self._s, self._tau))
        return self._point_at_tau(tau), self._tangent_at_tau(tau)

    def _s_at_theta(self, theta: float) -> float:
        tau = (theta - self.th0) / (self.th1 - self.th0)
        tau = min(max(tau, 0.0), 1.0)
        return float(np.interp(tau, self._tau, self._s))

    def intersections(self, q0: np.ndarray, dq: np.ndarray):
        # Substituting the segment parameterization into the ellipse
        # equation gives a quadratic in the segment parameter; solving it
        # in closed form is exact, tighter than any iterative tolerance.
        x0 = (q0[0] - self.center[0]) / self.a
        y0 = (q0[1] - self.center[1]) / self.b
        ex = dq[0] / self.a
        ey = dq[1] / self.b
        qa = ex * ex + ey * ey
        qb = 2.0 * (x0 * ex + y0 * ey)
        qc = x0 * x0 + y0 * y0 - 1.0
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0.0 or qa == 0.0:
            return []
        root = math.sqrt(disc)
        out = []
        for s in ((-qb - root) / (2.0 * qa), (-qb + root) / (2.0 * qa)):
            if not (-_PARAM_EPS <= s <= 1.0 + _PARAM_EPS):
                continue
            s_cl = min(max(s, 0.0), 1.0)
            p = q0 + s_cl * dq
            theta = math.atan2((p[1] - self.center[1]) / self.b, (p[0] - self.center[0]) / self.a)
            tau = (theta - self.th0) / (self.th1 - self.th0)
            if not (-1e-9 <= tau <= 1.0 + 1e-9):
                continue
            tau = min(max(tau, 0.0), 1.0)
            t_global = self.t0 + self._s_at_theta(theta)
            out.append((s_cl, p, t_global, self._tangent_at_tau(tau)))
        if len(out) == 2 and out[0][0] == out[1][0]:
            out = out[:1]
        return out

    def nearest(self, p: np.ndarray):
        coarse = self._tau[::16]
        pts = self.center + np.stack(
            [self.a * np.cos(self.th0 + coarse * (self.th1 - self.th0)),
             self.b * np.sin(self.th0 + coarse * (self.th1 - self.th0))],
            axis=1,
        )
        d2 = np.sum((pts - p) ** 2, axis=1)
        i = int(np.argmin(d2))
        lo = coarse[max(i - 1, 0)]
        hi = coarse[min(i + 1, len(coarse) - 1)]

        def f(tau):
            q = self._point_at_tau(tau)
            return float((q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2)

        if hi > lo:
            res = minimize_scalar(f, bounds=(float(lo), float(hi)), method="bounded",
                                  options={"xatol": 1e-12})
            tau = float(res.x)
        else:
            tau = float(lo)
        q = self._point_at_tau(tau)
        t_global = self.t0 + float(np.interp(tau, self._tau, self._s))
        return float(np.linalg.norm(p - q)), q, t_global, self._tangent_at_tau(tau)


@dataclass(frozen=True, eq=False)
class GuideLine:
    """A parametric guide curve on a canvas.

    `segments` is ordered; parameter t is global arc length in [0, length).
    For the curved kind, cx and cy are the ellipse shape fractions; the
    rectangle ignores them.
    """

    kind: GuideKind
    canvas: CanvasDims
    cx: float | None
    cy: float | None
    segments: tuple
    length: float

    @property
    def arc_interval(self) -> tuple[float, float] | None:
        """Global parameter span covered by the elliptical arcs, if any."""
        arcs = [s for s in self.segments if isinstance(s, _ArcSeg)]
        if not arcs:
            return None
        return arcs[0].t0, arcs[-1].t0 + arcs[-1].length


def make_guide_line(kind: GuideKind, canvas: CanvasDims, cx: float = 0.5, cy: float = 0.4) -> GuideLine:
    """Build a guide line on the canvas.

    Rectangle: the closed image border, walked left border down, bottom
    edge right, right border up, top edge left, starting at (0, 0).

    Curved: an open U-shape, walked from (0, 0): left border down to
    (0, cy*h), an elliptical arc through the bottom apex (cx*w, 2*cy*h)
    to (w, cy*h), then the right border up to (w, 0).  With cx = 0.5 the
    two arc halves lie on one ellipse; for other cx each half keeps its
    own horizontal semi-axis so the curve still meets both borders.
    """
    w, h = float(canvas.w), float(canvas.h)
    if kind is GuideKind.RECTANGLE:
        corners = [(0.0, 0.0), (0.0, h), (w, h), (w, 0.0), (0.0, 0.0)]
        segs = []
        t = 0.0
        for p0, p1 in zip(corners[:-1], corners[1:]):
            seg = _LineSeg(p0, p1, t)
            segs.append(seg)
            t += seg.length
        return GuideLine(kind, canvas, None, None, tuple(segs), t)

    if kind is GuideKind.CURVED:
        if not (0.0 < cx < 1.0):
            raise DomainError(f"cx must lie in (0, 1), got {cx}")
        if not (0.0 < cy <= 0.5):
            raise DomainError(f"cy must lie in (0, 0.5], got {cy}")
        join_y = cy * h
        center = (cx * w, join_y)
        segs = []
        t = 0.0
        left = _LineSeg((0.0, 0.0), (0.0, join_y), t)
        segs.append(left)
        t += left.length
        arc_l = _ArcSeg(center, cx * w, join_y, math.pi, math.pi / 2.0, t)
        segs.append(arc_l)
        t += arc_l.length
        arc_r = _ArcSeg(center, (1.0 - cx) * w, join_y, math.pi / 2.0, 0.0, t)
        segs.append(arc_r)
        t += arc_r.length
        right = _LineSeg((w, join_y), (w, 0.0), t)
        segs.append(right)
        t += right.length
        return GuideLine(kind, canvas, cx, cy, tuple(segs), t)

    raise DomainError(f"unknown guide kind: {kind!r}")


def guide_point_and_tangent(g: GuideLine, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Point and unit tangent at global arc-length parameter t in [0, length)."""
    if not (0.0 <= t < g.length):
        raise DomainError(f"parameter {t} outside [0, {g.length})")
    for seg in reversed(g.segments):
        if t >= seg.t0:
            return seg.point_tangent(t - seg.t0)
    return g.segments[0].point_tangent(0.0)


@dataclass(frozen=True, eq=False)
class OriginRecord:
    """Where a lane meets the guide line.

    origin: sub-pixel image point on the guide; t: its arc-length
    parameter; lane_dir / guide_tangent: unit directions there; alpha:
    grazing angle between them in degrees, folded into (0, 90].
    """

    origin: np.ndarray
    t: float
    lane_dir: np.ndarray
    guide_tangent: np.ndarray
    alpha: float


def lane_origin(lane: Lane, g: GuideLine) -> OriginRecord:
    """Anchor a lane on the guide line.

    Walks the polyline from its bottom-most endpoint and returns the
    first crossing with the guide; the lane direction is taken from the
    crossing polyline segment.  A lane that never crosses the guide is
    anchored at the orthogonal projection of its bottom-most endpoint
    onto the guide, with the lane direction of its first segment.
    """
    pts = lane.points
    for i in range(pts.shape[0] - 1):
        q0 = pts[i]
        dq = pts[i + 1] - q0
        hits = []
        for seg in g.segments:
            hits.extend(seg.intersections(q0, dq))
        if hits:
            hits.sort(key=lambda h: (h[0], h[2]))
            s, point, t, tangent = hits[0]
            lane_dir = _unit(dq)
            return OriginRecord(point, t, lane_dir, tangent, _fold_angle_deg(lane_dir, tangent))
    p = pts[0]
    best = None
    for seg in g.segments:
        cand = seg.nearest(p)
        if best is None or cand[0] < best[0]:
            best = cand
    _, point, t, tangent = best
    lane_dir = _unit(pts[1] - pts[0])
    return OriginRecord(point, t, lane_dir, tangent, _fold_angle_deg(lane_dir, tangent))


def response_range(d: float, alpha: float) -> float:
    """Length of guide line within distance d of a lane at grazing angle alpha.

    A lane crossing the guide at alpha degrees keeps a band of radius d
    (image px) over a guide stretch of 2*d / sin(alpha); the spread grows
    without bound as the crossing becomes tangential.
    """
    if d <= 0.0:
        raise DomainError(f"band radius must be positive, got {d}")
    if not (0.0 < alpha <= 90.0):
        raise DomainError(f"grazing angle must lie in (0, 90], got {alpha}")
    return 2.0 * d / math.sin(math.radians(alpha))


def check_bucket_edges(bucket_edges) -> np.ndarray:
    """Validate grazing-angle bucket edges; returns them as an array."""
    edges = np.asarray(bucket_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0.0):
        raise DomainError("bucket edges must be strictly increasing with at least two entries")
    if edges[0] != 0.0 or edges[-1] != 90.0:
        raise DomainError("bucket edges must span (0, 90]")
    return edges


def bucket_index(edges: np.ndarray, alpha: float) -> int:
    """Index of the half-open bucket (e[i], e[i+1]] containing alpha."""
    idx = int(np.searchsorted(edges, alpha, side="left")) - 1
    return min(max(idx, 0), edges.size - 2)


def grazing_angle_histogram(scenes, g: GuideLine, bucket_edges) -> np.ndarray:
    """Count lane origins per grazing-angle bucket over a corpus.

    `scenes` is an iterable of lane lists.  Buckets are the half-open
    intervals (e[i], e[i+1]] over strictly increasing edges spanning
    (0, 90]; every lane lands in exactly one bucket.
    """
    edges = check_bucket_edges(bucket_edges)
    counts = np.zeros(edges.size - 1, dtype=int)
    for lanes in scenes:
        for lane in lanes:
            counts[bucket_index(edges, lane_origin(lane, g).alpha)] += 1
    return counts
