"""Planar geometry: planner states, oriented boxes, polylines, and polygons.

Everything here is an immutable value type; instances are safe to share
across parallel scene evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * math.pi

# Distance from the rear bumper to the rear axle when no explicit
# axle-to-center offset is given to footprint().
DEFAULT_REAR_OVERHANG = 0.9


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def wrap_angles(thetas: np.ndarray) -> np.ndarray:
    """Vectorized wrap_angle with the same rounding order."""
    wrapped = np.fmod(np.asarray(thetas, dtype=float) + math.pi, TWO_PI)
    wrapped = np.where(wrapped <= 0.0, wrapped + TWO_PI, wrapped)
    return wrapped - math.pi


@dataclass(frozen=True)
class TrajState:
    """Single planner state, pose anchored at the rear axle."""

    x: float
    y: float
    theta: float  # heading, radians, normalized to (-pi, pi]
    v: float = 0.0  # longitudinal speed, m/s, >= 0
    a: float = 0.0  # longitudinal acceleration, m/s^2
    k: float = 0.0  # curvature, 1/m
    j: float = 0.0  # longitudinal jerk, m/s^3

    def __post_init__(self):
        vals = (self.x, self.y, self.theta, self.v, self.a, self.k, self.j)
        if not all(math.isfinite(f) for f in vals):
            raise ValueError(f"non-finite state fields: {vals}")
        if self.v < 0.0:
            raise ValueError(f"negative speed {self.v} (reverse driving unsupported)")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly time-sampled sequence of states."""

    states: tuple[TrajState, ...]
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 1:
            raise ValueError("trajectory needs at least one state")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"invalid dt {self.dt}")

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, idx: int) -> TrajState:
        return self.states[idx]

    @cached_property
    def array(self) -> np.ndarray:
        """(N, 7) array of [x, y, theta, v, a, k, j] rows."""
        return np.array(
            [(s.x, s.y, s.theta, s.v, s.a, s.k, s.j) for s in self.states],
            dtype=float,
        )

    @property
    def positions(self) -> np.ndarray:
        return self.array[:, :2]

    @property
    def duration(self) -> float:
        return (len(self.states) - 1) * self.dt


def to_ego_frame(
    pose: tuple[float, float, float], ref: tuple[float, float, float]
) -> tuple[float, float, float]:
    """Express a pose relative to a reference pose (rigid-body transform)."""
    dx = pose[0] - ref[0]
    dy = pose[1] - ref[1]
    c = math.cos(ref[2])
    s = math.sin(ref[2])
    return (c * dx + s * dy, c * dy - s * dx, wrap_angle(pose[2] - ref[2]))


def from_ego_frame(
    pose: tuple[float, float, float], ref: tuple[float, float, float]
) -> tuple[float, float, float]:
    """Inverse of to_ego_frame."""
    c = math.cos(ref[2])
    s = math.sin(ref[2])
    return (
        ref[0] + c * pose[0] - s * pose[1],
        ref[1] + s * pose[0] + c * pose[1],
        wrap_angle(pose[2] + ref[2]),
    )


def poses_to_ego_frame(poses: np.ndarray, ref: tuple[float, float, float]) -> np.ndarray:
    """to_ego_frame applied to an (N, 3) pose array."""
    poses = np.asarray(poses, dtype=float)
    dx = poses[:, 0] - ref[0]
    dy = poses[:, 1] - ref[1]
    c = math.cos(ref[2])
    s = math.sin(ref[2])
    out = np.empty_like(poses)
    out[:, 0] = c * dx + s * dy
    out[:, 1] = c * dy - s * dx
    out[:, 2] = wrap_angles(poses[:, 2] - ref[2])
    return out


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle with a heading, used for vehicle footprints and obstacles."""

    x: float
    y: float
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if not (self.length > 0.0 and self.width > 0.0):
            raise ValueError(f"box needs positive dims, got {self.length}x{self.width}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @cached_property
    def corners(self) -> np.ndarray:
        """(4, 2) corners: front-left, front-right, rear-right, rear-left."""
        hl = 0.5 * self.length
        hw = 0.5 * self.width
        c = math.cos(self.heading)
        s = math.sin(self.heading)
        local = np.array([(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)])
        out = np.empty((4, 2))
        out[:, 0] = self.x + local[:, 0] * c - local[:, 1] * s
        out[:, 1] = self.y + local[:, 0] * s + local[:, 1] * c
        return out

    @property
    def circumradius(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)


def footprint(
    state: TrajState,
    length: float,
    width: float,
    axle_to_center: float | None = None,
) -> OrientedBox:
    """Body box for a rear-axle-anchored pose.

    The box center sits axle_to_center meters ahead of the pose along the
    heading; default places the rear axle DEFAULT_REAR_OVERHANG behind the
    box rear... i.e. offset = length/2 - rear overhang.
    """
    if axle_to_center is None:
        axle_to_center = 0.5 * length - DEFAULT_REAR_OVERHANG
    return OrientedBox(
        x=state.x + axle_to_center * math.cos(state.theta),
        y=state.y + axle_to_center * math.sin(state.theta),
        heading=state.theta,
        length=length,
        width=width,
    )


def _project_interval(corners: np.ndarray, ax: float, ay: float) -> tuple[float, float]:
    dots = corners[:, 0] * ax + corners[:, 1] * ay
    return float(dots.min()), float(dots.max())


def boxes_intersect(a: OrientedBox, b: OrientedBox) -> bool:
    """Exact separating-axis test; boundary contact counts as intersection."""
    if math.hypot(b.x - a.x, b.y - a.y) > a.circumradius + b.circumradius:
        return False
    ca, cb = a.corners, b.corners
    for heading in (a.heading, b.heading):
        c = math.cos(heading)
        s = math.sin(heading)
        for ax, ay in ((c, s), (-s, c)):
            lo_a, hi_a = _project_interval(ca, ax, ay)
            lo_b, hi_b = _project_interval(cb, ax, ay)
            if hi_a < lo_b or hi_b < lo_a:
                return False
    return True


def point_segment_distance(
    px: np.ndarray, py: np.ndarray, ax: float, ay: float, bx: float, by: float
) -> np.ndarray:
    """Distance from points (px, py) to segment AB; handles degenerate AB."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    dx = bx - ax
    dy = by - ay
    denom = dx * dx + dy * dy
    if denom <= 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / denom, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def segments_distance(
    a1: np.ndarray, a2: np.ndarray, b1: np.ndarray, b2: np.ndarray
) -> float:
    """Minimum distance between two segments."""
    if _segments_cross(a1, a2, b1, b2):
        return 0.0
    d = min(
        float(point_segment_distance(a1[0], a1[1], b1[0], b1[1], b2[0], b2[1])),
        float(point_segment_distance(a2[0], a2[1], b1[0], b1[1], b2[0], b2[1])),
        float(point_segment_distance(b1[0], b1[1], a1[0], a1[1], a2[0], a2[1])),
        float(point_segment_distance(b2[0], b2[1], a1[0], a1[1], a2[0], a2[1])),
    )
    return d


def _orient(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_cross(a1, a2, b1, b2) -> bool:
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def point_to_box_distance(px: np.ndarray, py: np.ndarray, box: OrientedBox) -> np.ndarray:
    """Euclidean distance from points to an oriented box (0 inside)."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    c = math.cos(box.heading)
    s = math.sin(box.heading)
    dx = px - box.x
    dy = py - box.y
    lx = c * dx + s * dy
    ly = c * dy - s * dx
    ex = np.maximum(np.abs(lx) - 0.5 * box.length, 0.0)
    ey = np.maximum(np.abs(ly) - 0.5 * box.width, 0.0)
    return np.hypot(ex, ey)


def box_distance(a: OrientedBox, b: OrientedBox) -> float:
    """Minimum distance between two oriented boxes (0 if they intersect)."""
    if boxes_intersect(a, b):
        return 0.0
    ca, cb = a.corners, b.corners
    best = math.inf
    for i in range(4):
        a1, a2 = ca[i], ca[(i + 1) % 4]
        for jj in range(4):
            b1, b2 = cb[jj], cb[(jj + 1) % 4]
            best = min(best, segments_distance(a1, a2, b1, b2))
    return best


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd containment test for (N, 2) points against a closed ring."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(polygon, dtype=float)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    x1 = poly[:, 0][None, :]
    y1 = poly[:, 1][None, :]
    x2 = np.roll(poly[:, 0], -1)[None, :]
    y2 = np.roll(poly[:, 1], -1)[None, :]
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    crossing = straddle & (x < x_int)
    return (crossing.sum(axis=1) % 2) == 1


def polygon_contains(point: tuple[float, float], polygon: np.ndarray) -> bool:
    return bool(points_in_polygon(np.array([point]), polygon)[0])


def box_intersects_polygon(box: OrientedBox, polygon: np.ndarray) -> bool:
    """True if an oriented box touches a polygon's area."""
    poly = np.asarray(polygon, dtype=float)
    if points_in_polygon(box.corners, poly).any():
        return True
    cx = np.array([[box.x, box.y]])
    if points_in_polygon(poly, box.corners).any() or points_in_polygon(cx, poly)[0]:
        return True
    corners = box.corners
    for i in range(4):
        a1, a2 = corners[i], corners[(i + 1) % 4]
        for jj in range(len(poly)):
            b1, b2 = poly[jj], poly[(jj + 1) % len(poly)]
            if _segments_cross(a1, a2, b1, b2):
                return True
    return False


def box_to_ring_distance(box: OrientedBox, polygon: np.ndarray) -> float:
    """Minimum distance from a box to a polygon's boundary ring."""
    poly = np.asarray(polygon, dtype=float)
    corners = box.corners
    best = math.inf
    for jj in range(len(poly)):
        b1 = poly[jj]
        b2 = poly[(jj + 1) % len(poly)]
        for i in range(4):
            a1, a2 = corners[i], corners[(i + 1) % 4]
            best = min(best, segments_distance(a1, a2, b1, b2))
    return best


@dataclass(frozen=True)
class Projection:
    """Result of projecting a point onto a polyline."""

    s: float  # arclength of the closest point
    d: float  # signed lateral offset, left of travel positive
    segment: int
    foot: tuple[float, float]


class Polyline:
    """Piecewise-linear curve with arclength parameterization.

    Consecutive duplicate points are dropped at construction; a polyline
    whose total length is zero is rejected.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("polyline needs an (N>=2, 2) point array")
        if not np.isfinite(pts).all():
            raise ValueError("polyline points must be finite")
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1])) > 0.0
        pts = pts[keep]
        if len(pts) < 2:
            raise ValueError("degenerate polyline (zero length)")
        self.points = pts
        deltas = np.diff(pts, axis=0)
        self.seg_lengths = np.hypot(deltas[:, 0], deltas[:, 1])
        self.cum_s = np.concatenate(([0.0], np.cumsum(self.seg_lengths)))
        self.length = float(self.cum_s[-1])
        self.tangents = deltas / self.seg_lengths[:, None]
        self.normals = np.column_stack((-self.tangents[:, 1], self.tangents[:, 0]))

    def __len__(self) -> int:
        return len(self.points)

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project (N, 2) points; returns (s, signed d) arrays.

        Projection clamps to the endpoints; ties go to the smallest s.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.points[:-1]
        ab = np.diff(self.points, axis=0)
        denom = self.seg_lengths**2
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip((rel * ab[None, :, :]).sum(axis=2) / denom[None, :], 0.0, 1.0)
        foot = a[None, :, :] + t[:, :, None] * ab[None, :, :]
        diff = pts[:, None, :] - foot
        dist2 = (diff**2).sum(axis=2)
        idx = np.argmin(dist2, axis=1)  # first minimum -> smallest s on ties
        rows = np.arange(len(pts))
        t_best = t[rows, idx]
        s = self.cum_s[idx] + t_best * self.seg_lengths[idx]
        dvec = diff[rows, idx]
        tan = self.tangents[idx]
        d = tan[:, 0] * dvec[:, 1] - tan[:, 1] * dvec[:, 0]
        return s, d

    def project_point(self, x: float, y: float) -> Projection:
        """Scalar projection with segment and foot-point details."""
        pts = np.array([[x, y]])
        a = self.points[:-1]
        ab = np.diff(self.points, axis=0)
        denom = self.seg_lengths**2
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip((rel * ab[None, :, :]).sum(axis=2) / denom[None, :], 0.0, 1.0)[0]
        foot = a + t[:, None] * ab
        diff = pts[0][None, :] - foot
        dist2 = (diff**2).sum(axis=1)
        idx = 0
        best = dist2[0]
        for i in range(1, len(dist2)):
            if dist2[i] < best - 1e-18:
                best = dist2[i]
                idx = i
        tan = self.tangents[idx]
        d = float(tan[0] * diff[idx][1] - tan[1] * diff[idx][0])
        s = float(self.cum_s[idx] + t[idx] * self.seg_lengths[idx])
        return Projection(s=s, d=d, segment=idx, foot=(float(foot[idx][0]), float(foot[idx][1])))

    def locate(self, s: float) -> tuple[int, float]:
        """Segment index and along-segment fraction for an arclength."""
        s = min(max(s, 0.0), self.length)
        idx = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        idx = min(max(idx, 0), len(self.seg_lengths) - 1)
        t = (s - self.cum_s[idx]) / self.seg_lengths[idx]
        return idx, t

    def point_at(self, s: float) -> tuple[float, float]:
        idx, t = self.locate(s)
        p = self.points[idx] + t * (self.points[idx + 1] - self.points[idx])
        return (float(p[0]), float(p[1]))

    def heading_at(self, s: float) -> float:
        idx, _ = self.locate(s)
        t = self.tangents[idx]
        return math.atan2(t[1], t[0])

    def frenet_to_xy(self, s: float, d: float) -> tuple[float, float]:
        """Cartesian point at arclength s offset d to the left."""
        idx, t = self.locate(s)
        p = self.points[idx] + t * (self.points[idx + 1] - self.points[idx])
        n = self.normals[idx]
        return (float(p[0] + d * n[0]), float(p[1] + d * n[1]))


def project_to_polyline(point: tuple[float, float], polyline) -> tuple[float, float]:
    """(s, signed d) of a point against a polyline given as points or Polyline."""
    if not isinstance(polyline, Polyline):
        polyline = Polyline(polyline)
    proj = polyline.project_point(point[0], point[1])
    return (proj.s, proj.d)
