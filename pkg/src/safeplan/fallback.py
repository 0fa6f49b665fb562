"""Rule-based fallback layer: labels a planned trajectory Feasible/Infeasible
via dynamic, legality, and collision checks; generates lane-aligned
candidates when needed and selects the one closest to the planner's output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .candidates import LeadEstimate, generate_candidates
from .geometry import (
    DEFAULT_REAR_OVERHANG,
    OrientedBox,
    Polyline,
    Trajectory,
    box_intersects_polygon,
    footprint,
    point_to_box_distance,
    points_in_polygon,
)
from .kinematics import KinematicLimits
from .prediction import PredictionSet
from .world import LightState, MapModel, SceneFrame


class FeasibilityLabel(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


class Cause(str, Enum):
    # dynamic
    JERK = "jerk"
    ACCEL = "accel"
    CURVATURE = "curvature"
    CURVATURE_RATE = "curvature-rate"
    LATERAL_ACCEL = "lateral-accel"
    STEERING_JERK = "steering-jerk"
    # legality
    STOP_SIGN = "stop-sign"
    RIGHT_OF_WAY = "right-of-way"
    RED_LIGHT = "red-light"
    OFF_DRIVABLE = "off-drivable"
    # collision likelihood
    AGENT_OVERLAP = "agent-overlap"
    STATIC_OVERLAP = "static-overlap"
    LANE_BOUNDARY = "lane-boundary-contact"
    LONGITUDINAL_GAP = "longitudinal-gap"
    TTC = "ttc"
    HEADWAY = "headway"


_CAUSE_RANK = {cause: i for i, cause in enumerate(Cause)}


@dataclass(frozen=True)
class Violation:
    cause: Cause
    index: int
    measured: float
    bound: float


@dataclass(frozen=True)
class ViolationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def label(self) -> FeasibilityLabel:
        return FeasibilityLabel.INFEASIBLE if self.violations else FeasibilityLabel.FEASIBLE

    @property
    def primary_cause(self) -> Cause | None:
        return self.violations[0].cause if self.violations else None

    def causes(self) -> tuple[str, ...]:
        seen: list[str] = []
        for v in self.violations:
            if v.cause.value not in seen:
                seen.append(v.cause.value)
        return tuple(seen)


def merge_reports(*reports: ViolationReport) -> ViolationReport:
    merged = [v for rep in reports for v in rep.violations]
    merged.sort(key=lambda v: (v.index, _CAUSE_RANK[v.cause]))
    return ViolationReport(violations=tuple(merged))


@dataclass(frozen=True)
class FallbackConfig:
    """Thresholds and candidate grids for the fallback layer.

    Dynamic checks run against the comfort variants of the limits by default;
    the collision-metric thresholds mirror the closed-loop event thresholds.
    """

    limits: KinematicLimits = field(default_factory=KinematicLimits)
    use_comfort: bool = True
    grid_resolution: float = 0.2
    min_longitudinal_gap: float = 2.0
    ttc_threshold: float = 1.5
    headway_threshold: float = 1.0
    headway_min_speed: float = 0.5
    speed_offsets: tuple[float, ...] = (-4.0, -2.0, -1.0, 0.0, 1.0, 2.0)
    time_gaps: tuple[float, ...] = (1.0, 1.5, 2.0)
    estop_decels: tuple[float, ...] = (2.0, 3.5)
    corridor_growth_tol: float = 1e-3
    tolerance: float = 1e-9

    def __post_init__(self):
        if not (0.0 < self.grid_resolution <= 0.5):
            raise ValueError("grid resolution must be in (0, 0.5] m")
        if min(self.min_longitudinal_gap, self.ttc_threshold, self.headway_threshold) <= 0:
            raise ValueError("collision thresholds must be positive")


def check_dynamics(
    traj: Trajectory,
    limits: KinematicLimits,
    comfort: bool = False,
    tol: float = 1e-9,
) -> ViolationReport:
    """Per-state bounds on jerk, accel, curvature, curvature rate, lateral
    acceleration, and steering jerk. Index 0 is the current state and is
    only used as the predecessor for the rate checks.
    """
    arr = traj.array
    dt = traj.dt
    v = arr[:, 3]
    a = arr[:, 4]
    k = arr[:, 5]
    j = arr[:, 6]
    if comfort:
        b_jerk = limits.comfort_max_jerk
        a_min, a_max = limits.comfort_min_accel, limits.comfort_max_accel
        b_lat = limits.comfort_max_lateral_accel
    else:
        b_jerk = limits.max_jerk
        a_min, a_max = limits.min_accel, limits.max_accel
        b_lat = limits.max_lateral_accel
    k_cap = limits.curvature_cap

    violations: list[Violation] = []

    def flag(cause, indices, measured, bound):
        for i in indices:
            violations.append(Violation(cause, int(i), float(measured[i]), bound))

    idx = np.arange(len(arr))
    interior = idx >= 1
    flag(Cause.JERK, idx[interior & (np.abs(j) > b_jerk + tol)], np.abs(j), b_jerk)
    over = interior & ((a > a_max + tol) | (a < a_min - tol))
    flag(Cause.ACCEL, idx[over], a, a_max)
    flag(Cause.CURVATURE, idx[interior & (np.abs(k) > k_cap + tol)], np.abs(k), k_cap)
    lat = np.abs(k) * v * v
    flag(Cause.LATERAL_ACCEL, idx[interior & (lat > b_lat + tol)], lat, b_lat)
    if len(arr) > 1:
        rate = np.empty(len(arr))
        rate[0] = 0.0
        rate[1:] = np.abs(np.diff(k)) / dt
        flag(
            Cause.CURVATURE_RATE,
            idx[interior & (rate > limits.max_curvature_rate + tol)],
            rate,
            limits.max_curvature_rate,
        )
        steer = rate * v
        flag(
            Cause.STEERING_JERK,
            idx[interior & (steer > limits.max_steering_jerk + tol)],
            steer,
            limits.max_steering_jerk,
        )
    violations.sort(key=lambda vi: (vi.index, _CAUSE_RANK[vi.cause]))
    return ViolationReport(violations=tuple(violations))


# ---------------------------------------------------------------------------
# occupancy rasterization

_CELL_OFFSET = np.int64(1 << 20)
_CELL_STRIDE = np.int64(1 << 21)


def box_cells(box: OrientedBox, resolution: float) -> np.ndarray:
    """Sorted packed indices of grid cells whose centers lie within half a
    cell diagonal of the box; this inflation makes overlap tests conservative
    without over-reporting beyond one grid diagonal of separation.
    """
    half_diag = resolution * math.sqrt(2.0) / 2.0
    reach = box.circumradius + half_diag
    ix0 = math.floor((box.x - reach) / resolution)
    ix1 = math.floor((box.x + reach) / resolution)
    iy0 = math.floor((box.y - reach) / resolution)
    iy1 = math.floor((box.y + reach) / resolution)
    ixs = np.arange(ix0, ix1 + 1, dtype=np.int64)
    iys = np.arange(iy0, iy1 + 1, dtype=np.int64)
    cx = (ixs + 0.5) * resolution
    cy = (iys + 0.5) * resolution
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    dist = point_to_box_distance(gx.ravel(), gy.ravel(), box)
    mask = dist <= half_diag
    gi, gj = np.meshgrid(ixs, iys, indexing="ij")
    keys = (gi.ravel()[mask] + _CELL_OFFSET) * _CELL_STRIDE + (gj.ravel()[mask] + _CELL_OFFSET)
    keys.sort()
    return keys


def raster_boxes_overlap(a: OrientedBox, b: OrientedBox, resolution: float) -> bool:
    """Occupancy-grid overlap verdict for two boxes at a given resolution."""
    band = resolution * math.sqrt(2.0)
    if math.hypot(b.x - a.x, b.y - a.y) > a.circumradius + b.circumradius + band:
        return False
    cells = np.intersect1d(
        box_cells(a, resolution), box_cells(b, resolution), assume_unique=True
    )
    return cells.size > 0


class OccupancyGrid:
    """Lazy per-step occupancy built from agent forecasts and static boxes.

    Built once per planning cycle and shared across the ML trajectory and
    every candidate check.
    """

    def __init__(self, predictions: PredictionSet, static_obstacles, resolution: float):
        self.resolution = resolution
        self.band = resolution * math.sqrt(2.0)
        self.forecasts = list(predictions.agents.values())
        self.steps = int(round(predictions.horizon / predictions.dt))
        self.static_boxes = list(static_obstacles)
        if self.forecasts and self.steps > 0:
            self.agent_pos = np.stack([f.poses[:, :2] for f in self.forecasts])
            self.agent_radius = np.array(
                [0.5 * math.hypot(f.length, f.width) for f in self.forecasts]
            )
        else:
            self.agent_pos = np.zeros((0, self.steps, 2))
            self.agent_radius = np.zeros(0)
        self._step_cells: dict[int, np.ndarray] = {}
        self._static_cells: np.ndarray | None = None

    def agent_cells(self, step: int) -> np.ndarray:
        """Occupied cells of all agent footprints at plan step (1-based)."""
        cached = self._step_cells.get(step)
        if cached is None:
            parts = []
            for f in self.forecasts:
                p = f.poses[step - 1]
                box = OrientedBox(x=p[0], y=p[1], heading=p[2], length=f.length, width=f.width)
                parts.append(box_cells(box, self.resolution))
            cached = np.unique(np.concatenate(parts)) if parts else np.zeros(0, np.int64)
            self._step_cells[step] = cached
        return cached

    def static_cells(self) -> np.ndarray:
        if self._static_cells is None:
            parts = [box_cells(b, self.resolution) for b in self.static_boxes]
            self._static_cells = (
                np.unique(np.concatenate(parts)) if parts else np.zeros(0, np.int64)
            )
        return self._static_cells

    def agents_near(self, step: int, center: tuple[float, float], ego_radius: float) -> bool:
        if len(self.forecasts) == 0 or step > self.steps:
            return False
        d = np.hypot(
            self.agent_pos[:, step - 1, 0] - center[0],
            self.agent_pos[:, step - 1, 1] - center[1],
        )
        return bool((d <= self.agent_radius + ego_radius + self.band).any())

    def statics_near(self, center: tuple[float, float], ego_radius: float) -> bool:
        for b in self.static_boxes:
            d = float(point_to_box_distance(center[0], center[1], b))
            if d <= ego_radius + self.band:
                return True
        return False


# ---------------------------------------------------------------------------
# check context

@dataclass(eq=False)
class CheckContext:
    """Per-planning-cycle world view shared by the legality/collision checks."""

    route: Polyline
    corridor: list  # route-lane polygons
    drivable: list
    conflict_regions: list
    stop_lines: list  # (s_line, control, line_id)
    light_states: dict
    occupancy: OccupancyGrid
    agent_route: list  # (agent_id, s (steps,), d (steps,), speeds, half_len)
    ego_length: float
    ego_width: float
    front_offset: float
    corridor_half: float
    dt: float
    _region_busy: dict = field(default_factory=dict)
    _region_meta: list = field(default_factory=list)

    def region_busy(self, ri: int) -> np.ndarray:
        """Per-step mask: any predicted agent center inside conflict region ri."""
        busy = self._region_busy.get(ri)
        if busy is None:
            steps = self.occupancy.steps
            busy = np.zeros(steps, dtype=bool)
            region = self.conflict_regions[ri]
            for f in self.occupancy.forecasts:
                if steps == 0:
                    break
                busy |= points_in_polygon(f.poses[:, :2], region)
            self._region_busy[ri] = busy
        return busy

    def region_meta(self, ri: int) -> tuple[float, float, float]:
        while len(self._region_meta) <= ri:
            region = self.conflict_regions[len(self._region_meta)]
            cx = float(region[:, 0].mean())
            cy = float(region[:, 1].mean())
            rad = float(np.hypot(region[:, 0] - cx, region[:, 1] - cy).max())
            self._region_meta.append((cx, cy, rad))
        return self._region_meta[ri]


def build_context(
    frame: SceneFrame, predictions: PredictionSet, cfg: FallbackConfig
) -> CheckContext:
    m = frame.map
    corridor = [lane.polygon for lane in m.lanes if lane.lane_id in m.route_lane_ids]
    half = 0.5 * m.route_lane_width()
    stop_lines = []
    for sl in m.stop_lines:
        mid = sl.midpoint
        proj = m.route.project_point(mid[0], mid[1])
        if abs(proj.d) <= 0.6 * m.route_lane_width():
            stop_lines.append((proj.s, sl.control, sl.line_id))
    occupancy = OccupancyGrid(predictions, m.static_obstacles, cfg.grid_resolution)
    agent_route = []
    for f in predictions.agents.values():
        if len(f.poses) == 0:
            continue
        s_a, d_a = m.route.project(f.poses[:, :2])
        agent_route.append((f.agent_id, s_a, d_a, f.speeds, 0.5 * f.length))
    return CheckContext(
        route=m.route,
        corridor=corridor,
        drivable=list(m.drivable),
        conflict_regions=list(m.conflict_regions),
        stop_lines=stop_lines,
        light_states=dict(frame.light_states),
        occupancy=occupancy,
        agent_route=agent_route,
        ego_length=frame.ego_length,
        ego_width=frame.ego_width,
        front_offset=frame.ego_length - DEFAULT_REAR_OVERHANG,
        corridor_half=half,
        dt=predictions.dt,
    )


@dataclass(eq=False)
class _TrajGeom:
    boxes: list
    corners: np.ndarray  # (N, 4, 2)
    s: np.ndarray
    d: np.ndarray


def _traj_geometry(traj: Trajectory, ctx: CheckContext) -> _TrajGeom:
    boxes = [footprint(st, ctx.ego_length, ctx.ego_width) for st in traj.states]
    corners = np.stack([b.corners for b in boxes])
    s, d = ctx.route.project(traj.array[:, :2])
    return _TrajGeom(boxes=boxes, corners=corners, s=s, d=d)


def _in_any_polygon(points: np.ndarray, polygons) -> np.ndarray:
    inside = np.zeros(len(points), dtype=bool)
    for poly in polygons:
        inside |= points_in_polygon(points, poly)
    return inside


def _check_legality(traj: Trajectory, ctx: CheckContext, geom: _TrajGeom) -> ViolationReport:
    n = len(traj)
    violations: list[Violation] = []

    # off-drivable: any footprint corner outside the drivable area
    if ctx.drivable:
        flat = geom.corners.reshape(-1, 2)
        outside = (~_in_any_polygon(flat, ctx.drivable)).reshape(n, 4)
        counts = outside.sum(axis=1)
        for i in range(1, n):
            if counts[i] > 0:
                violations.append(
                    Violation(Cause.OFF_DRIVABLE, i, float(counts[i]), 0.0)
                )

    # stop lines: red-light and stop-sign crossings along the route
    s_front = geom.s + ctx.front_offset
    for s_line, control, line_id in ctx.stop_lines:
        if s_front[0] > s_line + 1e-6:
            continue  # already past the line; nothing for this plan to run
        beyond = np.nonzero(s_front[1:] > s_line + 1e-6)[0]
        if len(beyond) == 0:
            continue
        cross_idx = int(beyond[0]) + 1
        if control == "stop_sign":
            window = (traj.array[: cross_idx + 1, 3] < 0.1) & (
                (s_line - s_front[: cross_idx + 1]) >= 0.0
            ) & ((s_line - s_front[: cross_idx + 1]) <= 3.0)
            if not window.any():
                measured = float(traj.array[: cross_idx + 1, 3].min())
                violations.append(Violation(Cause.STOP_SIGN, cross_idx, measured, 0.1))
        else:
            state = ctx.light_states.get(control)
            if state == LightState.RED:
                measured = float(s_front[cross_idx] - s_line)
                violations.append(Violation(Cause.RED_LIGHT, cross_idx, measured, 0.0))

    # right of way: simultaneous occupancy of a mapped conflict region
    for ri in range(len(ctx.conflict_regions)):
        busy = ctx.region_busy(ri)
        if not busy.any():
            continue
        cx, cy, rad = ctx.region_meta(ri)
        region = ctx.conflict_regions[ri]
        for i in range(1, n):
            if i - 1 >= len(busy) or not busy[i - 1]:
                continue
            b = geom.boxes[i]
            if math.hypot(b.x - cx, b.y - cy) > rad + b.circumradius:
                continue
            if box_intersects_polygon(b, region):
                violations.append(Violation(Cause.RIGHT_OF_WAY, i, 1.0, 0.0))
                break

    violations.sort(key=lambda vi: (vi.index, _CAUSE_RANK[vi.cause]))
    return ViolationReport(violations=tuple(violations))


def _check_collision(
    traj: Trajectory, ctx: CheckContext, cfg: FallbackConfig, geom: _TrajGeom
) -> ViolationReport:
    n = len(traj)
    occ = ctx.occupancy
    violations: list[Violation] = []
    ego_radius = geom.boxes[0].circumradius

    # footprint overlap against rasterized agent predictions and statics
    static_near_possible = len(occ.static_boxes) > 0
    for i in range(1, n):
        box = geom.boxes[i]
        center = (box.x, box.y)
        if i <= occ.steps and occ.agents_near(i, center, ego_radius):
            ego_cells = box_cells(box, occ.resolution)
            hits = np.intersect1d(ego_cells, occ.agent_cells(i), assume_unique=True)
            if hits.size:
                violations.append(
                    Violation(Cause.AGENT_OVERLAP, i, float(hits.size), 0.0)
                )
        if static_near_possible and occ.statics_near(center, ego_radius):
            ego_cells = box_cells(box, occ.resolution)
            hits = np.intersect1d(ego_cells, occ.static_cells(), assume_unique=True)
            if hits.size:
                violations.append(
                    Violation(Cause.STATIC_OVERLAP, i, float(hits.size), 0.0)
                )

    # lane boundary contact: corner leaves the route corridor while the
    # lateral offset is still growing (recovering trajectories are exempt)
    if ctx.corridor:
        flat = geom.corners.reshape(-1, 2)
        outside = (~_in_any_polygon(flat, ctx.corridor)).reshape(n, 4)
        counts = outside.sum(axis=1)
        absd = np.abs(geom.d)
        for i in range(1, n):
            if counts[i] > 0 and absd[i] > absd[i - 1] + cfg.corridor_growth_tol:
                violations.append(
                    Violation(Cause.LANE_BOUNDARY, i, float(counts[i]), 0.0)
                )

    # lead-gap metrics along the route
    if ctx.agent_route and n > 1:
        steps = min(n - 1, occ.steps)
        ego_s = geom.s[1 : steps + 1] + ctx.front_offset
        ego_v = traj.array[1 : steps + 1, 3]
        gap_best = np.full(steps, np.inf)
        lead_speed = np.zeros(steps)
        for _, s_a, d_a, speeds, half_len in ctx.agent_route:
            s_a = s_a[:steps]
            d_a = d_a[:steps]
            sp = speeds[:steps]
            valid = (np.abs(d_a) <= ctx.corridor_half) & (s_a > ego_s - ctx.front_offset)
            gaps = np.where(valid, s_a - half_len - ego_s, np.inf)
            better = gaps < gap_best
            lead_speed = np.where(better, sp, lead_speed)
            gap_best = np.where(better, gaps, gap_best)
        tol = cfg.tolerance
        for i in range(steps):
            gap = gap_best[i]
            if not np.isfinite(gap):
                continue
            if gap < cfg.min_longitudinal_gap - tol:
                violations.append(
                    Violation(
                        Cause.LONGITUDINAL_GAP, i + 1, float(gap), cfg.min_longitudinal_gap
                    )
                )
            closing = ego_v[i] - lead_speed[i]
            if closing > 0.0:
                ttc = gap / closing
                if ttc < cfg.ttc_threshold - tol:
                    violations.append(
                        Violation(Cause.TTC, i + 1, float(ttc), cfg.ttc_threshold)
                    )
            if ego_v[i] > cfg.headway_min_speed:
                headway = gap / ego_v[i]
                if headway < cfg.headway_threshold - tol:
                    violations.append(
                        Violation(Cause.HEADWAY, i + 1, float(headway), cfg.headway_threshold)
                    )

    violations.sort(key=lambda vi: (vi.index, _CAUSE_RANK[vi.cause]))
    return ViolationReport(violations=tuple(violations))


def check_legality(
    traj: Trajectory,
    map_model: MapModel,
    light_states: dict,
    predictions: PredictionSet,
    ego_length: float = 4.8,
    ego_width: float = 2.0,
    cfg: FallbackConfig | None = None,
) -> ViolationReport:
    """Traffic-rule checks against the map, signals, and agent predictions."""
    cfg = cfg or FallbackConfig()
    frame = _pseudo_frame(map_model, light_states, ego_length, ego_width)
    ctx = build_context(frame, predictions, cfg)
    return _check_legality(traj, ctx, _traj_geometry(traj, ctx))


def check_collision(
    traj: Trajectory,
    predictions: PredictionSet,
    map_model: MapModel,
    cfg: FallbackConfig | None = None,
    ego_length: float = 4.8,
    ego_width: float = 2.0,
) -> ViolationReport:
    """Overlap, lane-contact, and longitudinal-metric checks."""
    cfg = cfg or FallbackConfig()
    frame = _pseudo_frame(map_model, {}, ego_length, ego_width)
    ctx = build_context(frame, predictions, cfg)
    return _check_collision(traj, ctx, cfg, _traj_geometry(traj, ctx))


def _pseudo_frame(map_model, light_states, ego_length, ego_width) -> SceneFrame:
    from .geometry import TrajState

    return SceneFrame(
        timestamp=0.0,
        ego=TrajState(0.0, 0.0, 0.0),
        ego_length=ego_length,
        ego_width=ego_width,
        agents=(),
        light_states=light_states,
        map=map_model,
    )


def check_trajectory(
    traj: Trajectory,
    ctx: CheckContext,
    cfg: FallbackConfig,
    short_circuit: bool = False,
    include_collision: bool = True,
) -> ViolationReport:
    """All three check families, merged and ordered by (state index, cause)."""
    dyn = check_dynamics(traj, cfg.limits, comfort=cfg.use_comfort, tol=cfg.tolerance)
    if short_circuit and dyn.violations:
        return dyn
    geom = _traj_geometry(traj, ctx)
    leg = _check_legality(traj, ctx, geom)
    if short_circuit and leg.violations:
        return merge_reports(dyn, leg)
    if not include_collision:
        return merge_reports(dyn, leg)
    col = _check_collision(traj, ctx, cfg, geom)
    return merge_reports(dyn, leg, col)


@dataclass(frozen=True, eq=False)
class FallbackDecision:
    """Outcome of one fallback cycle, including everything needed for logs."""

    trajectory: Trajectory
    source: str  # "ml" | candidate id | "emergency-stop"
    timestamp: float
    ml_report: ViolationReport
    candidate_reports: tuple = ()
    distances: tuple = ()  # (candidate_id, squared L2 distance to ML positions)
    chosen_distance: float = 0.0

    def log_record(self) -> str:
        causes = ";".join(self.ml_report.causes()) or "-"
        return f"{self.timestamp:.2f},{self.source},{causes},{self.chosen_distance:.6f}"


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """Sum over steps of the squared positional gap between two trajectories."""
    n = min(len(a), len(b))
    diff = a.positions[:n] - b.positions[:n]
    return float((diff * diff).sum())


def _find_lead(ctx: CheckContext, ego_s0: float) -> LeadEstimate | None:
    best = None
    best_s = math.inf
    for _, s_a, d_a, speeds, half_len in ctx.agent_route:
        if len(s_a) == 0:
            continue
        if abs(d_a[0]) <= ctx.corridor_half and s_a[0] > ego_s0 and s_a[0] < best_s:
            best_s = s_a[0]
            best = LeadEstimate(s=s_a, speed=speeds, half_length=half_len)
    return best


def select_trajectory(
    ml_traj: Trajectory,
    frame: SceneFrame,
    predictions: PredictionSet,
    cfg: FallbackConfig,
) -> FallbackDecision:
    """Validate the planner trajectory; on violations pick the feasible
    candidate closest to it (ties by generation order), or the emergency
    stop as the total last resort.
    """
    ctx = build_context(frame, predictions, cfg)
    ml_report = check_trajectory(ml_traj, ctx, cfg)
    if not ml_report.violations:
        return FallbackDecision(
            trajectory=ml_traj,
            source="ml",
            timestamp=frame.timestamp,
            ml_report=ml_report,
        )

    ego_s0 = float(ctx.route.project_point(frame.ego.x, frame.ego.y).s)
    lead = _find_lead(ctx, ego_s0)
    steps = len(ml_traj) - 1
    cands = generate_candidates(
        frame.ego,
        ctx.route,
        lead,
        cfg.limits,
        cfg.speed_offsets,
        cfg.time_gaps,
        cfg.estop_decels,
        steps=steps,
        dt=ml_traj.dt,
        ego_front_offset=ctx.front_offset,
    )

    reports = []
    distances = []
    best_idx = -1
    best_key = (math.inf, math.inf)
    for idx, cand in enumerate(cands):
        rep = check_trajectory(cand.trajectory, ctx, cfg, short_circuit=True)
        dist = trajectory_distance(cand.trajectory, ml_traj)
        reports.append((cand.candidate_id, rep))
        distances.append((cand.candidate_id, dist))
        if not rep.violations and (dist, idx) < best_key:
            best_key = (dist, idx)
            best_idx = idx

    if best_idx >= 0:
        chosen = cands[best_idx]
        return FallbackDecision(
            trajectory=chosen.trajectory,
            source=chosen.candidate_id,
            timestamp=frame.timestamp,
            ml_report=ml_report,
            candidate_reports=tuple(reports),
            distances=tuple(distances),
            chosen_distance=best_key[0],
        )

    # nothing is feasible: emergency stop, dynamically and legally checked
    # but exempt from the collision check as the total last resort
    last = cands[-1]
    last_report = check_trajectory(
        last.trajectory, ctx, cfg, short_circuit=False, include_collision=False
    )
    return FallbackDecision(
        trajectory=last.trajectory,
        source="emergency-stop",
        timestamp=frame.timestamp,
        ml_report=ml_report,
        candidate_reports=tuple(reports),
        distances=tuple(distances),
        chosen_distance=trajectory_distance(last.trajectory, ml_traj),
    )
