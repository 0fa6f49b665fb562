"""Vectorized scene encoding: every perceived element becomes a set of
fixed-width feature rows expressed in the ego frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import to_ego_frame
from ..world import LightState, SceneFrame

ROW_DIM = 18

KIND_EGO = 0
KIND_AGENT = 1
KIND_LANE = 2
KIND_CROSSWALK = 3
KIND_STOP_LINE = 4
KIND_LIGHT = 5
KIND_ROUTE = 6

KIND_NAMES = ("ego-history", "agent", "lane", "crosswalk", "stop-line", "light", "route")

_LIGHT_SLOT = {LightState.RED: 15, LightState.YELLOW: 16, LightState.GREEN: 17}

ROUTE_LOOKAHEAD = 100.0
ROUTE_POINTS = 11
LANE_POINTS = 10
CROSSWALK_POINTS = 8


@dataclass(frozen=True)
class ElementCaps:
    """Per-kind element budget; nearest elements win."""

    agents: int = 16
    lanes: int = 32
    crosswalks: int = 8
    stop_lines: int = 8
    lights: int = 8


@dataclass(frozen=True, eq=False)
class FeatureElement:
    kind: int
    element_id: str
    rows: np.ndarray  # (R, ROW_DIM)


def _row(
    pose_rel: tuple[float, float, float],
    kind: int,
    time_offset: float = 0.0,
    length: float = 0.0,
    width: float = 0.0,
    speed: float = 0.0,
    light: LightState | None = None,
) -> np.ndarray:
    row = np.zeros(ROW_DIM)
    row[0] = pose_rel[0]
    row[1] = pose_rel[1]
    row[2] = math.cos(pose_rel[2])
    row[3] = math.sin(pose_rel[2])
    row[4] = time_offset
    row[5] = length
    row[6] = width
    row[7] = speed
    row[8 + kind] = 1.0
    if light is not None:
        row[_LIGHT_SLOT[light]] = 1.0
    return row


def _subsample(points: np.ndarray, cap: int) -> np.ndarray:
    if len(points) <= cap:
        return points
    idx = np.linspace(0, len(points) - 1, cap).round().astype(int)
    return points[np.unique(idx)]


def encode_scene(
    frame: SceneFrame,
    history_depth: int = 10,
    caps: ElementCaps = ElementCaps(),
    dt: float = 0.1,
) -> list[FeatureElement]:
    """Encode a frame as ego-relative vector sets with deterministic ordering:
    ego history first, then agents by distance, then map elements by type and
    distance, each kind capped nearest-first.
    """
    ego = frame.ego
    ref = ego.pose
    now = frame.timestamp
    elements: list[FeatureElement] = []

    # ego history: oldest to newest, the current state last
    hist = list(frame.ego_history)[-history_depth:] + [ego]
    n = len(hist)
    rows = np.stack(
        [
            _row(
                to_ego_frame(st.pose, ref),
                KIND_EGO,
                time_offset=(i - (n - 1)) * dt,
                length=frame.ego_length,
                width=frame.ego_width,
                speed=st.v,
            )
            for i, st in enumerate(hist)
        ]
    )
    elements.append(FeatureElement(KIND_EGO, "ego", rows))

    # agents, nearest first
    scored = []
    for agent in frame.agents:
        times, poses, speeds = agent.history_until(now, history_depth + 1)
        d = math.hypot(poses[-1][0] - ego.x, poses[-1][1] - ego.y)
        scored.append((d, agent.agent_id, agent, times, poses, speeds))
    scored.sort(key=lambda item: (item[0], item[1]))
    for d, agent_id, agent, times, poses, speeds in scored[: caps.agents]:
        rows = np.stack(
            [
                _row(
                    to_ego_frame((poses[i][0], poses[i][1], poses[i][2]), ref),
                    KIND_AGENT,
                    time_offset=times[i] - now,
                    length=agent.length,
                    width=agent.width,
                    speed=speeds[i],
                )
                for i in range(len(times))
            ]
        )
        elements.append(FeatureElement(KIND_AGENT, agent_id, rows))

    m = frame.map

    # lanes
    lane_scored = []
    for lane in m.lanes:
        pts = lane.centerline.points
        d = float(np.hypot(pts[:, 0] - ego.x, pts[:, 1] - ego.y).min())
        lane_scored.append((d, lane.lane_id, lane))
    lane_scored.sort(key=lambda item: (item[0], item[1]))
    for d, lane_id, lane in lane_scored[: caps.lanes]:
        pts = _subsample(lane.centerline.points, LANE_POINTS)
        s_vals, _ = lane.centerline.project(pts)
        rows = np.stack(
            [
                _row(
                    to_ego_frame(
                        (pts[i][0], pts[i][1], lane.centerline.heading_at(s_vals[i])), ref
                    ),
                    KIND_LANE,
                    width=lane.width,
                )
                for i in range(len(pts))
            ]
        )
        elements.append(FeatureElement(KIND_LANE, lane_id, rows))

    # crosswalks
    cw_scored = []
    for i, poly in enumerate(m.crosswalks):
        cx, cy = poly[:, 0].mean(), poly[:, 1].mean()
        cw_scored.append((math.hypot(cx - ego.x, cy - ego.y), f"crosswalk-{i}", poly))
    cw_scored.sort(key=lambda item: (item[0], item[1]))
    for d, cw_id, poly in cw_scored[: caps.crosswalks]:
        pts = _subsample(np.asarray(poly, dtype=float), CROSSWALK_POINTS)
        rows = np.stack(
            [
                _row(
                    to_ego_frame(
                        (
                            pts[i][0],
                            pts[i][1],
                            math.atan2(
                                pts[(i + 1) % len(pts)][1] - pts[i][1],
                                pts[(i + 1) % len(pts)][0] - pts[i][0],
                            ),
                        ),
                        ref,
                    ),
                    KIND_CROSSWALK,
                )
                for i in range(len(pts))
            ]
        )
        elements.append(FeatureElement(KIND_CROSSWALK, cw_id, rows))

    # stop lines
    sl_scored = []
    for sl in m.stop_lines:
        mid = sl.midpoint
        sl_scored.append((math.hypot(mid[0] - ego.x, mid[1] - ego.y), sl.line_id, sl))
    sl_scored.sort(key=lambda item: (item[0], item[1]))
    for d, line_id, sl in sl_scored[: caps.stop_lines]:
        heading = math.atan2(sl.by - sl.ay, sl.bx - sl.ax)
        light = frame.light_states.get(sl.control) if sl.control != "stop_sign" else None
        rows = np.stack(
            [
                _row(to_ego_frame((sl.ax, sl.ay, heading), ref), KIND_STOP_LINE, light=light),
                _row(to_ego_frame((sl.bx, sl.by, heading), ref), KIND_STOP_LINE, light=light),
            ]
        )
        elements.append(FeatureElement(KIND_STOP_LINE, line_id, rows))

    # traffic lights, anchored at their stop lines
    light_scored = []
    for tl in m.lights:
        sl = m.stop_line_by_id(tl.stop_line_id)
        mid = sl.midpoint
        light_scored.append(
            (math.hypot(mid[0] - ego.x, mid[1] - ego.y), tl.light_id, tl, sl)
        )
    light_scored.sort(key=lambda item: (item[0], item[1]))
    for d, light_id, tl, sl in light_scored[: caps.lights]:
        heading = math.atan2(sl.by - sl.ay, sl.bx - sl.ax)
        mid = sl.midpoint
        state = frame.light_states.get(light_id)
        rows = _row(
            to_ego_frame((mid[0], mid[1], heading), ref), KIND_LIGHT, light=state
        )[None, :]
        elements.append(FeatureElement(KIND_LIGHT, light_id, rows))

    # route window ahead of the ego
    route = m.route
    s0 = route.project_point(ego.x, ego.y).s
    s_samples = np.clip(s0 + np.linspace(0.0, ROUTE_LOOKAHEAD, ROUTE_POINTS), 0.0, route.length)
    rows = np.stack(
        [
            _row(
                to_ego_frame((*route.point_at(s), route.heading_at(s)), ref),
                KIND_ROUTE,
            )
            for s in s_samples
        ]
    )
    elements.append(FeatureElement(KIND_ROUTE, "route", rows))

    return elements
