"""Synthetic scene generation and scene-file persistence.

Each template builds a canonical straight-road world, drives the logged ego
through the kinematic model with a scripted controller (so logs are feasible
imitation targets by construction), then applies a random rigid transform to
the whole scene.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import OrientedBox, Polyline, TrajState, wrap_angle
from .kinematics import KinematicLimits, clip_controls_arrays, step
from .world import (
    AgentTrack,
    LaneSegment,
    LightPhase,
    LightState,
    MapModel,
    ObjectType,
    Scene,
    StopLine,
    TrafficLight,
)

SCENE_SCHEMA_VERSION = 1

TEMPLATES = (
    "straight-follow",
    "lead-vehicle-braking",
    "signalized-intersection",
    "stop-sign",
    "pedestrian-crossing",
    "parked-car-nudge",
    "oncoming-traffic",
)

EGO_LENGTH = 4.8
EGO_WIDTH = 2.0
ROAD_LEN = 480.0


class SceneFormatError(ValueError):
    """Malformed scene file; the message names the offending field."""


class SceneVersionError(ValueError):
    """Scene file with an unsupported schema version."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Suite composition and randomization ranges for synthetic scenes."""

    counts: dict = field(default_factory=dict)
    seed: int = 0
    duration: float = 25.0
    dt: float = 0.1
    lane_width: float = 3.5
    shoulder: float = 0.5
    speed_range: tuple[float, float] = (7.0, 11.0)
    lead_gap_range: tuple[float, float] = (25.0, 45.0)
    lead_speed_frac_range: tuple[float, float] = (0.6, 0.9)
    brake_time_range: tuple[float, float] = (5.0, 9.0)
    brake_decel_range: tuple[float, float] = (2.0, 3.0)
    green_time_range: tuple[float, float] = (5.0, 11.0)
    ped_start_range: tuple[float, float] = (3.0, 8.0)
    nudge_offset_range: tuple[float, float] = (0.9, 1.3)
    world_offset: float = 200.0

    def __post_init__(self):
        for name, count in self.counts.items():
            if name not in TEMPLATES:
                raise ValueError(f"unknown scene template {name!r}")
            if count < 0:
                raise ValueError(f"negative count for template {name!r}")
        for rng_field in (
            self.speed_range,
            self.lead_gap_range,
            self.lead_speed_frac_range,
            self.brake_time_range,
            self.brake_decel_range,
            self.green_time_range,
            self.ped_start_range,
            self.nudge_offset_range,
        ):
            if rng_field[0] > rng_field[1]:
                raise ValueError(f"degenerate range {rng_field}")


# ---------------------------------------------------------------------------
# scripted log driver


@dataclass
class _StopPoint:
    s: float  # front-bumper target arclength (the stop line)
    kind: str  # "light" | "sign" | "window"
    release_t: float = math.inf  # lights/windows release by time
    dwell: float = 1.0  # signs release after standing this long
    _stood_since: float | None = None
    _released: bool = False


_IDM_A = 1.5
_IDM_B = 2.5
_IDM_DELTA = 4.0
_IDM_S0 = 2.5
_IDM_THW = 1.6
_STOP_S0 = 1.0


def _idm_interaction(v: float, dv: float, gap: float, s0: float, thw: float) -> float:
    gap = max(gap, 0.01)
    s_star = s0 + max(0.0, v * thw + v * dv / (2.0 * math.sqrt(_IDM_A * _IDM_B)))
    return -_IDM_A * (s_star / gap) ** 2


def _drive_ego(
    n_ticks: int,
    dt: float,
    v0: float,
    v_target: float,
    stops: list[_StopPoint],
    lead_track: AgentTrack | None,
    d_des_fn,
    limits: KinematicLimits,
    x0: float = 15.0,
) -> list[TrajState]:
    """Scripted longitudinal (IDM-style) + lateral (profile tracking) driver,
    stepped through the kinematic model with hard-limit clipping."""
    state = TrajState(x=x0, y=0.0, theta=0.0, v=v0, a=0.0, k=0.0, j=0.0)
    states = [state]
    front = EGO_LENGTH - 0.9
    for tick in range(n_ticks):
        t = tick * dt
        v = state.v
        a_free = _IDM_A * (1.0 - (v / max(v_target, 0.1)) ** _IDM_DELTA)
        a_des = a_free
        if lead_track is not None:
            lead_pose = lead_track.pose_at(t)
            lead_v = lead_track.speed_at(t)
            gap = (lead_pose[0] - 0.5 * lead_track.length) - (state.x + front)
            if gap < 80.0:
                a_des = min(
                    a_des, a_free + _idm_interaction(v, v - lead_v, gap, _IDM_S0, _IDM_THW)
                )
        for sp in stops:
            if sp._released or t >= sp.release_t:
                continue
            gap = sp.s - (state.x + front)
            if gap < -0.5:
                continue
            if sp.kind == "sign":
                if v < 0.05 and gap < 3.0:
                    if sp._stood_since is None:
                        sp._stood_since = t
                    elif t - sp._stood_since >= sp.dwell:
                        sp._released = True
                        continue
            a_des = min(a_des, a_free + _idm_interaction(v, v, gap, _STOP_S0, 0.9))
        a_des = min(max(a_des, -3.2), 1.5)
        if v < 0.02 and a_des < 0.0:
            a_des = 0.0

        d_des, slope = d_des_fn(state.x)
        theta_des = math.atan(slope)
        lat_cap = min(0.15, 1.8 / max(v * v, 1.0))
        k_cmd = 0.6 * wrap_angle(theta_des - state.theta) + 0.08 * (d_des - state.y)
        k_cmd = min(max(k_cmd, -lat_cap), lat_cap)
        j_cmd = min(max((a_des - state.a) / dt, -2.0), 2.0)

        jerks, curvatures, _, _ = clip_controls_arrays(
            np.array([j_cmd]), np.array([k_cmd]), state, limits, dt
        )
        state = step(state, float(jerks[0]), float(curvatures[0]), dt)
        states.append(state)
    return states


def _flat_profile(_s: float) -> tuple[float, float]:
    return 0.0, 0.0


def _nudge_profile_fn(x_center: float, offset: float):
    ramp = 22.0
    hold = 18.0
    x_in = x_center - hold / 2.0 - ramp
    x_hold = x_center - hold / 2.0
    x_out = x_center + hold / 2.0
    x_end = x_out + ramp

    def smooth(u: float) -> tuple[float, float]:
        u = min(max(u, 0.0), 1.0)
        return u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u)

    def profile(x: float) -> tuple[float, float]:
        if x < x_in or x > x_end:
            return 0.0, 0.0
        if x < x_hold:
            val, dv = smooth((x - x_in) / ramp)
            return offset * val, offset * dv / ramp
        if x <= x_out:
            return offset, 0.0
        val, dv = smooth((x - x_out) / ramp)
        return offset * (1.0 - val), -offset * dv / ramp

    return profile


# ---------------------------------------------------------------------------
# map and agent builders (canonical frame: route along +x, ego lane at y=0)


def _grid_times(duration: float, dt: float) -> np.ndarray:
    return dt * np.arange(int(round(duration / dt)) + 1)


def _const_speed_track(
    agent_id: str,
    obj_type: ObjectType,
    length: float,
    width: float,
    times: np.ndarray,
    start_xy: tuple[float, float],
    heading: float,
    speed_fn,
) -> AgentTrack:
    """Integrate a scalar speed profile along a fixed heading."""
    n = len(times)
    poses = np.empty((n, 3))
    speeds = np.empty(n)
    x, y = start_xy
    c, s = math.cos(heading), math.sin(heading)
    dt = float(times[1] - times[0]) if n > 1 else 0.1
    for i, t in enumerate(times):
        v = max(0.0, float(speed_fn(t)))
        poses[i] = (x, y, heading)
        speeds[i] = v
        x += v * c * dt
        y += v * s * dt
    return AgentTrack(
        agent_id=agent_id,
        object_type=obj_type,
        length=length,
        width=width,
        times=times,
        poses=poses,
        speeds=speeds,
    )


def _static_track(
    agent_id: str, obj_type: ObjectType, length: float, width: float,
    times: np.ndarray, pose: tuple[float, float, float],
) -> AgentTrack:
    poses = np.tile(np.asarray(pose, dtype=float), (len(times), 1))
    return AgentTrack(
        agent_id=agent_id,
        object_type=obj_type,
        length=length,
        width=width,
        times=times,
        poses=poses,
        speeds=np.zeros(len(times)),
    )


def _rect(x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=float)


@dataclass
class _WorldDraft:
    lanes: list
    crosswalks: list
    stop_lines: list
    lights: list
    drivable: list
    route_lane_ids: list
    route_points: np.ndarray
    conflict_regions: list
    static_obstacles: list
    agents: list
    light_schedule: list
    stops: list
    lead: AgentTrack | None = None
    d_des_fn: object = _flat_profile
    v_target_scale: float = 1.0


def _base_draft(cfg: ScenarioConfig, two_lane: bool = False, opposite: bool = False) -> _WorldDraft:
    lw = cfg.lane_width
    half = lw / 2.0 + cfg.shoulder
    lanes = [
        LaneSegment("lane-ego", Polyline([(0.0, 0.0), (ROAD_LEN, 0.0)]), lw),
    ]
    y_top = lw / 2.0 + cfg.shoulder
    if two_lane:
        if opposite:
            lanes.append(
                LaneSegment("lane-opposite", Polyline([(ROAD_LEN, lw), (0.0, lw)]), lw)
            )
        else:
            lanes.append(
                LaneSegment("lane-left", Polyline([(0.0, lw), (ROAD_LEN, lw)]), lw)
            )
        y_top = 1.5 * lw + cfg.shoulder
    drivable = [_rect(-10.0, ROAD_LEN + 10.0, -half, y_top)]
    return _WorldDraft(
        lanes=lanes,
        crosswalks=[],
        stop_lines=[],
        lights=[],
        drivable=drivable,
        route_lane_ids=["lane-ego"],
        route_points=np.array([(0.0, 0.0), (ROAD_LEN, 0.0)]),
        conflict_regions=[],
        static_obstacles=[],
        agents=[],
        light_schedule=[],
        stops=[],
    )


def _build_template(name: str, cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[_WorldDraft, float]:
    times = _grid_times(cfg.duration, cfg.dt)
    v0 = rng.uniform(*cfg.speed_range)

    if name == "straight-follow":
        draft = _base_draft(cfg, two_lane=True)
        gap = rng.uniform(*cfg.lead_gap_range)
        frac = rng.uniform(*cfg.lead_speed_frac_range)
        lead = _const_speed_track(
            "lead", ObjectType.VEHICLE, 4.6, 1.9, times,
            (15.0 + gap, 0.0), 0.0, lambda t, v=frac * v0: v,
        )
        draft.agents.append(lead)
        draft.lead = lead

    elif name == "lead-vehicle-braking":
        draft = _base_draft(cfg, two_lane=True)
        gap = rng.uniform(*cfg.lead_gap_range)
        t_b = rng.uniform(*cfg.brake_time_range)
        decel = rng.uniform(*cfg.brake_decel_range)
        v_lead = rng.uniform(*cfg.lead_speed_frac_range) * v0

        def lead_speed(t, v=v_lead, tb=t_b, d=decel):
            return v if t < tb else max(0.0, v - d * (t - tb))

        lead = _const_speed_track(
            "lead", ObjectType.VEHICLE, 4.6, 1.9, times, (15.0 + gap, 0.0), 0.0, lead_speed
        )
        draft.agents.append(lead)
        draft.lead = lead

    elif name == "signalized-intersection":
        draft = _base_draft(cfg)
        x_int = rng.uniform(150.0, 220.0)
        t_green = rng.uniform(*cfg.green_time_range)
        lw = cfg.lane_width
        draft.lanes.append(
            LaneSegment(
                "lane-cross", Polyline([(x_int, 60.0), (x_int, -60.0)]), lw
            )
        )
        draft.drivable.append(_rect(x_int - lw, x_int + lw, -60.0, 60.0))
        x_sl = x_int - lw - 2.5
        draft.stop_lines.append(StopLine("stopline-1", x_sl, -lw / 2, x_sl, lw / 2, "light-1"))
        draft.lights.append(TrafficLight("light-1", "stopline-1"))
        draft.light_schedule.append(LightPhase("light-1", 0.0, t_green, LightState.RED))
        draft.light_schedule.append(
            LightPhase("light-1", t_green, cfg.duration + 60.0, LightState.GREEN)
        )
        draft.conflict_regions.append(
            _rect(x_int - lw, x_int + lw, -lw, lw)
        )
        y_start = rng.uniform(28.0, 34.0)
        cross = _const_speed_track(
            "cross", ObjectType.VEHICLE, 4.6, 1.9, times,
            (x_int, y_start), -math.pi / 2.0, lambda t: 8.0,
        )
        draft.agents.append(cross)
        draft.stops.append(_StopPoint(s=x_sl, kind="light", release_t=t_green))

    elif name == "stop-sign":
        draft = _base_draft(cfg)
        x_sl = rng.uniform(140.0, 200.0)
        draft.stop_lines.append(
            StopLine("stopline-1", x_sl, -cfg.lane_width / 2, x_sl, cfg.lane_width / 2, "stop_sign")
        )
        draft.stops.append(_StopPoint(s=x_sl, kind="sign", dwell=1.0))

    elif name == "pedestrian-crossing":
        draft = _base_draft(cfg)
        x_c = rng.uniform(120.0, 200.0)
        t_start = rng.uniform(*cfg.ped_start_range)
        half = cfg.lane_width / 2.0 + cfg.shoulder
        cw = _rect(x_c - 1.5, x_c + 1.5, -half, half)
        draft.crosswalks.append(cw)
        draft.conflict_regions.append(cw)
        y_from = half + 1.5
        walk = 1.4

        def ped_speed(t, ts=t_start):
            return walk if t >= ts else 0.0

        ped = _const_speed_track(
            "ped", ObjectType.PEDESTRIAN, 0.6, 0.6, times,
            (x_c, y_from), -math.pi / 2.0, ped_speed,
        )
        draft.agents.append(ped)
        t_clear = t_start + (y_from + half + 1.0) / walk
        draft.stops.append(
            _StopPoint(s=x_c - 3.0, kind="window", release_t=t_clear)
        )

    elif name == "parked-car-nudge":
        draft = _base_draft(cfg)
        x_p = rng.uniform(120.0, 200.0)
        intrusion = rng.uniform(0.3, 0.6)
        offset = rng.uniform(*cfg.nudge_offset_range)
        parked = _static_track(
            "parked", ObjectType.VEHICLE, 4.4, 1.8, times,
            (x_p, -cfg.lane_width / 2.0 + intrusion, 0.0),
        )
        draft.agents.append(parked)
        draft.static_obstacles.append(
            OrientedBox(
                x=x_p - 9.0, y=-cfg.lane_width / 2.0 - 0.3, heading=0.0, length=1.0, width=0.8
            )
        )
        draft.d_des_fn = _nudge_profile_fn(x_p, offset)
        draft.v_target_scale = 0.8

    elif name == "oncoming-traffic":
        draft = _base_draft(cfg, two_lane=True, opposite=True)
        x_on = rng.uniform(250.0, 330.0)
        v_on = rng.uniform(*cfg.speed_range)
        oncoming = _const_speed_track(
            "oncoming", ObjectType.VEHICLE, 4.6, 1.9, times,
            (x_on, cfg.lane_width), math.pi, lambda t, v=v_on: v,
        )
        draft.agents.append(oncoming)

    else:
        raise ValueError(f"unknown scene template {name!r}")

    return draft, v0


# ---------------------------------------------------------------------------
# rigid transform of a finished draft


def _transform_points(points: np.ndarray, ox: float, oy: float, c: float, s: float) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    out = np.empty_like(points)
    out[:, 0] = ox + c * points[:, 0] - s * points[:, 1]
    out[:, 1] = oy + s * points[:, 0] + c * points[:, 1]
    return out


def _transform_poses(poses: np.ndarray, ox, oy, c, s, dtheta) -> np.ndarray:
    out = np.empty_like(poses)
    out[:, :2] = _transform_points(poses[:, :2], ox, oy, c, s)
    out[:, 2] = [wrap_angle(t + dtheta) for t in poses[:, 2]]
    return out


def _assemble_scene(
    scene_id: str,
    cfg: ScenarioConfig,
    draft: _WorldDraft,
    ego_states: list[TrajState],
    rng: np.random.Generator,
) -> Scene:
    ox, oy = rng.uniform(-cfg.world_offset, cfg.world_offset, size=2)
    dtheta = rng.uniform(-math.pi, math.pi)
    c, s = math.cos(dtheta), math.sin(dtheta)

    lanes = tuple(
        LaneSegment(
            lane.lane_id,
            Polyline(_transform_points(lane.centerline.points, ox, oy, c, s)),
            lane.width,
            lane.successors,
        )
        for lane in draft.lanes
    )
    stop_lines = tuple(
        StopLine(
            sl.line_id,
            *(_transform_points(np.array([[sl.ax, sl.ay]]), ox, oy, c, s)[0]),
            *(_transform_points(np.array([[sl.bx, sl.by]]), ox, oy, c, s)[0]),
            sl.control,
        )
        for sl in draft.stop_lines
    )
    statics = tuple(
        OrientedBox(
            x=ox + c * b.x - s * b.y,
            y=oy + s * b.x + c * b.y,
            heading=wrap_angle(b.heading + dtheta),
            length=b.length,
            width=b.width,
        )
        for b in draft.static_obstacles
    )
    map_model = MapModel(
        lanes=lanes,
        crosswalks=tuple(_transform_points(p, ox, oy, c, s) for p in draft.crosswalks),
        stop_lines=stop_lines,
        lights=tuple(draft.lights),
        drivable=tuple(_transform_points(p, ox, oy, c, s) for p in draft.drivable),
        route_lane_ids=tuple(draft.route_lane_ids),
        route=Polyline(_transform_points(draft.route_points, ox, oy, c, s)),
        conflict_regions=tuple(
            _transform_points(p, ox, oy, c, s) for p in draft.conflict_regions
        ),
        static_obstacles=statics,
    )
    agents = tuple(
        AgentTrack(
            agent_id=a.agent_id,
            object_type=a.object_type,
            length=a.length,
            width=a.width,
            times=a.times,
            poses=_transform_poses(a.poses, ox, oy, c, s, dtheta),
            speeds=a.speeds,
        )
        for a in draft.agents
    )
    ego = tuple(
        TrajState(
            x=ox + c * st.x - s * st.y,
            y=oy + s * st.x + c * st.y,
            theta=wrap_angle(st.theta + dtheta),
            v=st.v,
            a=st.a,
            k=st.k,
            j=st.j,
        )
        for st in ego_states
    )
    return Scene(
        scene_id=scene_id,
        dt=cfg.dt,
        duration=cfg.duration,
        map=map_model,
        ego_length=EGO_LENGTH,
        ego_width=EGO_WIDTH,
        ego_states=ego,
        agents=agents,
        light_schedule=tuple(draft.light_schedule),
    )


def generate_scene(name: str, cfg: ScenarioConfig, index: int) -> Scene:
    """Build one deterministic scene; the rng derives from (seed, index)."""
    rng = np.random.default_rng((cfg.seed, index))
    draft, v0 = _build_template(name, cfg, rng)
    limits = KinematicLimits()
    n_ticks = int(round(cfg.duration / cfg.dt))
    ego_states = _drive_ego(
        n_ticks,
        cfg.dt,
        v0,
        v0 * draft.v_target_scale,
        draft.stops,
        draft.lead,
        draft.d_des_fn,
        limits,
    )
    return _assemble_scene(f"{name}-{index:04d}", cfg, draft, ego_states, rng)


def generate_suite(cfg: ScenarioConfig) -> list[Scene]:
    """Generate the configured suite; deterministic per seed, scene by scene."""
    scenes = []
    index = 0
    for name in TEMPLATES:
        for _ in range(int(cfg.counts.get(name, 0))):
            scenes.append(generate_scene(name, cfg, index))
            index += 1
    return scenes


# ---------------------------------------------------------------------------
# persistence (versioned JSON with strict key validation)


def _check_keys(obj: dict, allowed: set, context: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise SceneFormatError(f"unknown field {sorted(unknown)[0]!r} in {context}")
    missing = allowed - set(obj)
    if missing:
        raise SceneFormatError(f"missing field {sorted(missing)[0]!r} in {context}")


def scene_to_dict(scene: Scene) -> dict:
    m = scene.map
    return {
        "version": SCENE_SCHEMA_VERSION,
        "id": scene.scene_id,
        "dt": scene.dt,
        "duration": scene.duration,
        "map": {
            "lanes": [
                {
                    "id": lane.lane_id,
                    "width": lane.width,
                    "successors": list(lane.successors),
                    "centerline": lane.centerline.points.tolist(),
                }
                for lane in m.lanes
            ],
            "crosswalks": [p.tolist() for p in m.crosswalks],
            "stop_lines": [
                {
                    "id": sl.line_id,
                    "a": [sl.ax, sl.ay],
                    "b": [sl.bx, sl.by],
                    "control": sl.control,
                }
                for sl in m.stop_lines
            ],
            "lights": [
                {"id": tl.light_id, "stop_line_id": tl.stop_line_id} for tl in m.lights
            ],
            "drivable": [p.tolist() for p in m.drivable],
            "route_lane_ids": list(m.route_lane_ids),
            "route": m.route.points.tolist(),
            "conflict_regions": [p.tolist() for p in m.conflict_regions],
            "static_obstacles": [
                {
                    "x": b.x,
                    "y": b.y,
                    "heading": b.heading,
                    "length": b.length,
                    "width": b.width,
                }
                for b in m.static_obstacles
            ],
        },
        "ego": {
            "length": scene.ego_length,
            "width": scene.ego_width,
            "states": [[s.x, s.y, s.theta, s.v, s.a, s.k, s.j] for s in scene.ego_states],
        },
        "agents": [
            {
                "id": a.agent_id,
                "type": a.object_type.value,
                "length": a.length,
                "width": a.width,
                "states": [
                    [float(a.times[i]), *a.poses[i].tolist(), float(a.speeds[i])]
                    for i in range(len(a.times))
                ],
            }
            for a in scene.agents
        ],
        "lights_schedule": [
            {"light_id": p.light_id, "start": p.start, "end": p.end, "state": p.state.value}
            for p in scene.light_schedule
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    if not isinstance(data, dict):
        raise SceneFormatError("scene file must contain a JSON object")
    if "version" not in data:
        raise SceneFormatError("missing field 'version' in scene")
    if data["version"] != SCENE_SCHEMA_VERSION:
        raise SceneVersionError(
            f"unsupported scene version {data['version']} (expected {SCENE_SCHEMA_VERSION})"
        )
    _check_keys(
        data,
        {"version", "id", "dt", "duration", "map", "ego", "agents", "lights_schedule"},
        "scene",
    )
    m = data["map"]
    _check_keys(
        m,
        {
            "lanes",
            "crosswalks",
            "stop_lines",
            "lights",
            "drivable",
            "route_lane_ids",
            "route",
            "conflict_regions",
            "static_obstacles",
        },
        "map",
    )
    try:
        lanes = tuple(
            LaneSegment(
                lane["id"],
                Polyline(np.array(lane["centerline"], dtype=float)),
                float(lane["width"]),
                tuple(lane["successors"]),
            )
            for lane in m["lanes"]
        )
        stop_lines = tuple(
            StopLine(
                sl["id"],
                float(sl["a"][0]),
                float(sl["a"][1]),
                float(sl["b"][0]),
                float(sl["b"][1]),
                sl["control"],
            )
            for sl in m["stop_lines"]
        )
        lights = tuple(
            TrafficLight(tl["id"], tl["stop_line_id"]) for tl in m["lights"]
        )
        statics = tuple(
            OrientedBox(
                x=float(b["x"]),
                y=float(b["y"]),
                heading=float(b["heading"]),
                length=float(b["length"]),
                width=float(b["width"]),
            )
            for b in m["static_obstacles"]
        )
        map_model = MapModel(
            lanes=lanes,
            crosswalks=tuple(np.array(p, dtype=float) for p in m["crosswalks"]),
            stop_lines=stop_lines,
            lights=lights,
            drivable=tuple(np.array(p, dtype=float) for p in m["drivable"]),
            route_lane_ids=tuple(m["route_lane_ids"]),
            route=Polyline(np.array(m["route"], dtype=float)),
            conflict_regions=tuple(np.array(p, dtype=float) for p in m["conflict_regions"]),
            static_obstacles=statics,
        )
        ego = data["ego"]
        _check_keys(ego, {"length", "width", "states"}, "ego")
        ego_states = tuple(
            TrajState(x=r[0], y=r[1], theta=r[2], v=r[3], a=r[4], k=r[5], j=r[6])
            for r in ego["states"]
        )
        agents = []
        for a in data["agents"]:
            _check_keys(a, {"id", "type", "length", "width", "states"}, f"agent {a.get('id')}")
            rows = np.array(a["states"], dtype=float)
            agents.append(
                AgentTrack(
                    agent_id=a["id"],
                    object_type=ObjectType(a["type"]),
                    length=float(a["length"]),
                    width=float(a["width"]),
                    times=rows[:, 0],
                    poses=rows[:, 1:4],
                    speeds=rows[:, 4],
                )
            )
        schedule = tuple(
            LightPhase(p["light_id"], float(p["start"]), float(p["end"]), LightState(p["state"]))
            for p in data["lights_schedule"]
        )
        return Scene(
            scene_id=data["id"],
            dt=float(data["dt"]),
            duration=float(data["duration"]),
            map=map_model,
            ego_length=float(ego["length"]),
            ego_width=float(ego["width"]),
            ego_states=ego_states,
            agents=tuple(agents),
            light_schedule=schedule,
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise SceneFormatError(f"malformed scene field: {exc}") from exc


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneFormatError(f"invalid scene JSON: {exc}") from exc
    return scene_from_dict(data)


def scenes_equal(a: Scene, b: Scene) -> bool:
    """Field-for-field equality, used by round-trip tests."""
    return scene_to_dict(a) == scene_to_dict(b)
