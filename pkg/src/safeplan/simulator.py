"""Closed-loop evaluation: unroll the planner plus fallback layer over logged
scenes with longitudinally reactive agents, detect the five closed-loop
events, and aggregate per-1000-mile reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fallback import FallbackConfig, FallbackDecision, select_trajectory
from .geometry import (
    OrientedBox,
    Polyline,
    TrajState,
    box_distance,
    footprint,
    point_segment_distance,
    point_to_box_distance,
    segments_distance,
)
from .kinematics import clip_controls_arrays, rollout_arrays, step, trajectory_from_array
from .policy.features import ElementCaps, encode_scene
from .policy.network import PolicyParams, raw_controls, split_controls
from .prediction import MODE_CONSTANT_VELOCITY, MODE_LOG_REPLAY, predict
from .world import AgentTrack, Scene, SceneFrame

METERS_PER_MILE = 1609.344

# closed-loop event thresholds
COLLISION_DIST = 0.05
CLOSE_CALL_DIST = 0.25
CLOSE_CALL_TTC = 1.5
CLOSE_CALL_HEADWAY = 1.0
CLOSE_CALL_MIN_SPEED = 0.5
DISCOMFORT_JERK = -5.0
PASSIVENESS_SPEED_DELTA = -5.0
OFF_ROAD_OFFSET = 10.0

EVENT_KINDS = ("collision", "close-call", "discomfort-braking", "passiveness", "off-road")


@dataclass(frozen=True)
class IdmParams:
    accel_max: float = 2.0
    decel_comfort: float = 3.0
    decel_cap: float = 6.0
    min_gap: float = 2.0
    time_headway: float = 1.5
    delta: float = 4.0
    lateral_margin: float = 0.3


@dataclass(frozen=True)
class SimConfig:
    history_depth: int = 10
    prediction_mode: str = MODE_CONSTANT_VELOCITY
    noise_sigma_jerk: float = 0.0
    noise_sigma_curvature: float = 0.0
    idm: IdmParams = field(default_factory=IdmParams)

    def __post_init__(self):
        if self.prediction_mode not in (MODE_CONSTANT_VELOCITY, MODE_LOG_REPLAY):
            raise ValueError(f"unknown prediction mode {self.prediction_mode!r}")


@dataclass(frozen=True)
class EventRecord:
    kind: str
    scene_id: str
    tick: int
    value: float


@dataclass(eq=False)
class _AgentSim:
    """Reactive agent: fixed logged path, IDM-governed longitudinal motion."""

    track: AgentTrack
    path: Polyline | None
    path_speeds: tuple[np.ndarray, np.ndarray] | None  # (s grid, logged speed)
    s: float
    v: float

    @classmethod
    def from_track(cls, track: AgentTrack) -> "_AgentSim":
        pts = track.poses[:, :2]
        arc = np.concatenate(
            ([0.0], np.cumsum(np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))))
        )
        if arc[-1] < 0.5:
            return cls(track=track, path=None, path_speeds=None, s=0.0, v=0.0)
        path = Polyline(pts)
        return cls(
            track=track,
            path=path,
            path_speeds=(arc, track.speeds.astype(float)),
            s=0.0,
            v=float(track.speeds[0]),
        )

    def pose(self) -> tuple[float, float, float]:
        if self.path is None:
            p = self.track.poses[0]
            return (float(p[0]), float(p[1]), float(p[2]))
        x, y = self.path.point_at(self.s)
        return (x, y, self.path.heading_at(self.s))

    def logged_speed(self) -> float:
        if self.path_speeds is None:
            return 0.0
        grid, speeds = self.path_speeds
        return float(np.interp(self.s, grid, speeds))

    def footprint(self) -> OrientedBox:
        x, y, heading = self.pose()
        return OrientedBox(
            x=x, y=y, heading=heading, length=self.track.length, width=self.track.width
        )


def update_reactive_agents(
    agents: list[_AgentSim],
    ego_state: TrajState,
    ego_length: float,
    ego_width: float,
    dt: float,
    idm: IdmParams,
) -> None:
    """Advance each agent along its logged path with an IDM-style speed law,
    braking for the ego or other agents ahead on that path. Geometry never
    leaves the logged path.
    """
    ego_box = footprint(ego_state, ego_length, ego_width)
    poses = [a.pose() for a in agents]
    for i, agent in enumerate(agents):
        if agent.path is None:
            continue
        if agent.s >= agent.path.length - 0.01:
            agent.v = 0.0
            continue
        v_log = agent.logged_speed()
        accel = idm.accel_max * (1.0 - (agent.v / max(v_log, 0.05)) ** idm.delta)

        obstacles = [(ego_box.x, ego_box.y, ego_state.theta, ego_state.v, ego_length, ego_width)]
        for jj, other in enumerate(agents):
            if jj == i:
                continue
            px, py, pth = poses[jj]
            obstacles.append((px, py, pth, other.v, other.track.length, other.track.width))

        gap_best = math.inf
        dv_best = 0.0
        for px, py, pth, pv, plen, pwid in obstacles:
            proj = agent.path.project_point(px, py)
            reach = 0.5 * (agent.track.width + pwid) + idm.lateral_margin
            if abs(proj.d) > reach or proj.s <= agent.s:
                continue
            gap = (proj.s - agent.s) - 0.5 * (agent.track.length + plen)
            if gap >= gap_best:
                continue
            heading_path = agent.path.heading_at(proj.s)
            v_along = pv * math.cos(pth - heading_path)
            gap_best = gap
            dv_best = agent.v - v_along
        if math.isfinite(gap_best):
            gap_best = max(gap_best, 0.01)
            s_star = idm.min_gap + max(
                0.0,
                agent.v * idm.time_headway
                + agent.v * dv_best / (2.0 * math.sqrt(idm.accel_max * idm.decel_comfort)),
            )
            accel -= idm.accel_max * (s_star / gap_best) ** 2
        accel = min(max(accel, -idm.decel_cap), idm.accel_max)
        s_next = min(agent.s + agent.v * dt, agent.path.length)
        agent.v = max(0.0, agent.v + accel * dt)
        agent.s = s_next


@dataclass(eq=False)
class SimState:
    """Mutable closed-loop state for one scene run."""

    scene: Scene
    tick: int
    ego: TrajState
    ego_history: list[TrajState]
    agents: list[_AgentSim]
    agent_times: list[float]
    agent_pose_hist: list[list[tuple[float, float, float]]]
    agent_speed_hist: list[list[float]]
    rng: np.random.Generator

    def frame(self) -> SceneFrame:
        t = self.tick * self.scene.dt
        tracks = []
        for i, sim in enumerate(self.agents):
            poses = np.array(self.agent_pose_hist[i][-12:], dtype=float)
            speeds = np.array(self.agent_speed_hist[i][-12:], dtype=float)
            times = np.asarray(self.agent_times[-12:], dtype=float)
            tracks.append(
                AgentTrack(
                    agent_id=sim.track.agent_id,
                    object_type=sim.track.object_type,
                    length=sim.track.length,
                    width=sim.track.width,
                    times=times[-len(poses):],
                    poses=poses,
                    speeds=speeds,
                )
            )
        return self.scene.frame_at(
            self.tick,
            ego=self.ego,
            ego_history=tuple(self.ego_history[-10:]),
            agents=tuple(tracks),
        )


def _init_sim(scene: Scene, seed_key) -> SimState:
    agents = [_AgentSim.from_track(t) for t in scene.agents]
    state = SimState(
        scene=scene,
        tick=0,
        ego=scene.ego_states[0],
        ego_history=[],
        agents=agents,
        agent_times=[0.0],
        agent_pose_hist=[[a.pose()] for a in agents],
        agent_speed_hist=[[a.v] for a in agents],
        rng=np.random.default_rng(seed_key),
    )
    return state


def step_sim(
    state: SimState,
    params: PolicyParams,
    fallback_cfg: FallbackConfig,
    sim_cfg: SimConfig,
    fallback_enabled: bool = True,
) -> FallbackDecision:
    """One closed-loop tick: plan, validate/replace, execute the first control
    step, then advance the reactive agents. Mutates `state`; returns the
    fallback decision for the tick.
    """
    scene = state.scene
    dt = scene.dt
    frame = state.frame()
    elements = encode_scene(frame, sim_cfg.history_depth, ElementCaps(), dt=dt)
    out, _ = raw_controls(params, elements)
    horizon = params.horizon_steps
    if sim_cfg.noise_sigma_jerk > 0.0 or sim_cfg.noise_sigma_curvature > 0.0:
        noise = state.rng.normal(0.0, 1.0, 2 * horizon)
        out = out + np.concatenate(
            [
                sim_cfg.noise_sigma_jerk * noise[:horizon],
                sim_cfg.noise_sigma_curvature * noise[horizon:],
            ]
        )
    raw_j, raw_k = split_controls(out, horizon)
    jerks, curvatures, _, _ = clip_controls_arrays(
        raw_j, raw_k, frame.ego, fallback_cfg.limits, dt
    )
    ml_traj = trajectory_from_array(
        rollout_arrays(frame.ego, jerks, curvatures, dt), dt
    )

    if fallback_enabled:
        predictions = predict(
            scene.agents if sim_cfg.prediction_mode == MODE_LOG_REPLAY else frame.agents,
            now=frame.timestamp,
            horizon=horizon * dt,
            dt=dt,
            mode=sim_cfg.prediction_mode,
        )
        decision = select_trajectory(ml_traj, frame, predictions, fallback_cfg)
    else:
        from .fallback import ViolationReport

        decision = FallbackDecision(
            trajectory=ml_traj,
            source="ml",
            timestamp=frame.timestamp,
            ml_report=ViolationReport(),
        )

    nxt = decision.trajectory.states[1]
    state.ego_history.append(state.ego)
    state.ego = step(state.ego, nxt.j, nxt.k, dt)
    update_reactive_agents(
        state.agents, state.ego, scene.ego_length, scene.ego_width, dt, sim_cfg.idm
    )
    state.tick += 1
    state.agent_times.append(state.tick * dt)
    for i, sim in enumerate(state.agents):
        state.agent_pose_hist[i].append(sim.pose())
        state.agent_speed_hist[i].append(sim.v)
    return decision


@dataclass(eq=False)
class SimTrace:
    """Per-tick record of one scene run."""

    scene_id: str
    dt: float
    ego: np.ndarray  # (n+1, 7) states
    exec_jerk: np.ndarray  # (n,)
    exec_curvature: np.ndarray  # (n,)
    sources: list[str]  # (n,)
    agent_poses: np.ndarray  # (n+1, n_agents, 3)
    agent_speeds: np.ndarray  # (n+1, n_agents)
    aborted: bool = False


def detect_events(trace: SimTrace, scene: Scene, route: Polyline) -> list[EventRecord]:
    """Five binary closed-loop events, each recorded at its first occurrence."""
    n_states = len(trace.ego)
    ego_xy = trace.ego[:, :2]
    ego_v = trace.ego[:, 3]
    s_sim, d_sim = route.project(ego_xy)
    front_offset = scene.ego_length - 0.9

    logged = np.array([(s.x, s.y, s.v) for s in scene.ego_states[:n_states]])
    s_log, _ = route.project(logged[:, :2])

    boxes = [
        footprint(
            TrajState(*trace.ego[i, :7]), scene.ego_length, scene.ego_width
        )
        for i in range(n_states)
    ]

    n_agents = trace.agent_poses.shape[1]
    agent_dims = [(a.length, a.width) for a in scene.agents]
    agent_radius = np.array([0.5 * math.hypot(l, w) for l, w in agent_dims])

    ring_segments = []
    for poly in scene.map.drivable:
        for i in range(len(poly)):
            ring_segments.append((poly[i], poly[(i + 1) % len(poly)]))

    first: dict[str, EventRecord] = {}

    def record(kind: str, tick: int, value: float) -> None:
        if kind not in first:
            first[kind] = EventRecord(kind, trace.scene_id, tick, value)

    for i in range(n_states):
        box = boxes[i]
        # agents
        min_agent = math.inf
        for ai in range(n_agents):
            px, py, pth = trace.agent_poses[i, ai]
            centers = math.hypot(px - box.x, py - box.y)
            if centers - agent_radius[ai] - box.circumradius > CLOSE_CALL_DIST:
                continue
            other = OrientedBox(
                x=px, y=py, heading=pth, length=agent_dims[ai][0], width=agent_dims[ai][1]
            )
            min_agent = min(min_agent, box_distance(box, other))
        # statics
        min_static = math.inf
        for b in scene.map.static_obstacles:
            quick = float(point_to_box_distance(box.x, box.y, b)) - box.circumradius
            if quick > CLOSE_CALL_DIST:
                continue
            min_static = min(min_static, box_distance(box, b))
        # road boundary rings (interior shared edges are far from nominal
        # driving at these thresholds, so every ring segment is measured)
        min_ring = math.inf
        for a_pt, b_pt in ring_segments:
            quick = float(
                point_segment_distance(box.x, box.y, a_pt[0], a_pt[1], b_pt[0], b_pt[1])
            ) - box.circumradius
            if quick > COLLISION_DIST:
                continue
            for ci in range(4):
                c1 = box.corners[ci]
                c2 = box.corners[(ci + 1) % 4]
                min_ring = min(min_ring, segments_distance(c1, c2, a_pt, b_pt))
        worst = min(min_agent, min_static, min_ring)
        if worst < COLLISION_DIST:
            record("collision", i, worst)

        # close-call ingredients (exclusivity against collisions is applied
        # after the scan, since collision may first occur at a later tick)
        if min_agent < CLOSE_CALL_DIST:
            record("close-call", i, min_agent)
        else:
            lead_gap = math.inf
            lead_v = 0.0
            for ai in range(n_agents):
                px, py, pth = trace.agent_poses[i, ai]
                proj = route.project_point(px, py)
                if abs(proj.d) > 0.5 * scene.map.route_lane_width():
                    continue
                if proj.s <= s_sim[i]:
                    continue
                gap = proj.s - 0.5 * agent_dims[ai][0] - (s_sim[i] + front_offset)
                if gap < lead_gap:
                    lead_gap = gap
                    heading_route = route.heading_at(proj.s)
                    lead_v = trace.agent_speeds[i, ai] * math.cos(pth - heading_route)
            if math.isfinite(lead_gap):
                closing = ego_v[i] - lead_v
                if closing > 0.0 and lead_gap / closing < CLOSE_CALL_TTC:
                    record("close-call", i, lead_gap / closing)
                elif ego_v[i] > CLOSE_CALL_MIN_SPEED and lead_gap / ego_v[i] < CLOSE_CALL_HEADWAY:
                    record("close-call", i, lead_gap / ego_v[i])

        # passiveness: markedly slower than the log and spatially behind it
        if i < len(logged):
            dv = ego_v[i] - logged[i, 2]
            if dv < PASSIVENESS_SPEED_DELTA and s_sim[i] < s_log[i]:
                record("passiveness", i, dv)

        if abs(d_sim[i]) > OFF_ROAD_OFFSET:
            record("off-road", i, abs(d_sim[i]))

    for i in range(len(trace.exec_jerk)):
        if trace.exec_jerk[i] < DISCOMFORT_JERK:
            record("discomfort-braking", i, float(trace.exec_jerk[i]))
            break

    events = [rec for rec in first.values()]
    if "collision" in first:
        events = [e for e in events if e.kind != "close-call"]
    events.sort(key=lambda e: (e.tick, e.kind))
    return events


@dataclass(eq=False)
class SceneResult:
    scene_id: str
    order: int
    ticks: int
    non_ml_ticks: int
    meters: float
    cause_counts: dict
    events: list[EventRecord]
    deviation_by_horizon: dict  # horizon -> mean |sim - log| position gap
    aborted: bool
    decision_log: list[str]
    trace: SimTrace | None = None


ADE_HORIZONS = (1.0, 2.0, 3.0, 4.0)


def run_scene(
    scene: Scene,
    params: PolicyParams,
    fallback_cfg: FallbackConfig,
    sim_cfg: SimConfig,
    seed: int,
    fallback_enabled: bool = True,
    order: int = 0,
    keep_trace: bool = False,
) -> SceneResult:
    """Unroll one scene for its full duration; deterministic given the seed."""
    state = _init_sim(scene, (seed, order))
    n_ticks = scene.n_ticks
    ego_rows = np.empty((n_ticks + 1, 7))
    ego_rows[0] = (
        state.ego.x, state.ego.y, state.ego.theta, state.ego.v,
        state.ego.a, state.ego.k, state.ego.j,
    )
    exec_j = np.zeros(n_ticks)
    exec_k = np.zeros(n_ticks)
    sources: list[str] = []
    cause_counts: dict = {}
    decision_log: list[str] = []
    non_ml = 0
    aborted = False
    done_ticks = 0
    for tick in range(n_ticks):
        try:
            decision = step_sim(state, params, fallback_cfg, sim_cfg, fallback_enabled)
        except Exception:
            aborted = True
            break
        done_ticks = tick + 1
        ego_rows[tick + 1] = (
            state.ego.x, state.ego.y, state.ego.theta, state.ego.v,
            state.ego.a, state.ego.k, state.ego.j,
        )
        exec_j[tick] = state.ego.j
        exec_k[tick] = state.ego.k
        sources.append(decision.source)
        decision_log.append(decision.log_record())
        if decision.source != "ml":
            non_ml += 1
            cause = decision.ml_report.primary_cause
            key = cause.value if cause is not None else "unknown"
            cause_counts[key] = cause_counts.get(key, 0) + 1

    n_states = done_ticks + 1
    agent_poses = np.empty((n_states, len(state.agents), 3))
    agent_speeds = np.empty((n_states, len(state.agents)))
    for ai in range(len(state.agents)):
        agent_poses[:, ai, :] = np.asarray(state.agent_pose_hist[ai][:n_states])
        agent_speeds[:, ai] = np.asarray(state.agent_speed_hist[ai][:n_states])
    trace = SimTrace(
        scene_id=scene.scene_id,
        dt=scene.dt,
        ego=ego_rows[:n_states],
        exec_jerk=exec_j[:done_ticks],
        exec_curvature=exec_k[:done_ticks],
        sources=sources,
        agent_poses=agent_poses,
        agent_speeds=agent_speeds,
        aborted=aborted,
    )
    events = detect_events(trace, scene, scene.map.route)

    deltas = np.hypot(
        trace.ego[:, 0] - [s.x for s in scene.ego_states[:n_states]],
        trace.ego[:, 1] - [s.y for s in scene.ego_states[:n_states]],
    )
    deviation = {}
    for h in ADE_HORIZONS:
        steps = min(int(round(h / scene.dt)), n_states - 1)
        deviation[h] = float(deltas[1 : steps + 1].mean()) if steps >= 1 else 0.0

    meters = float(
        np.hypot(np.diff(trace.ego[:, 0]), np.diff(trace.ego[:, 1])).sum()
    )
    return SceneResult(
        scene_id=scene.scene_id,
        order=order,
        ticks=done_ticks,
        non_ml_ticks=non_ml,
        meters=meters,
        cause_counts=cause_counts,
        events=events,
        deviation_by_horizon=deviation,
        aborted=aborted,
        decision_log=decision_log,
        trace=trace if keep_trace else None,
    )


@dataclass(eq=False)
class SimReport:
    """Aggregated closed-loop metrics over a scene suite."""

    scene_count: int
    miles: float
    total_ticks: int
    non_ml_ticks: int
    fallback_usage: float
    event_counts: dict
    rates_per_1000_miles: dict
    ade: dict
    trigger_histogram: dict
    aborted_scenes: list

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "scene_count": self.scene_count,
            "miles": self.miles,
            "total_ticks": self.total_ticks,
            "non_ml_ticks": self.non_ml_ticks,
            "fallback_usage": self.fallback_usage,
            "event_counts": {k: self.event_counts.get(k, 0) for k in EVENT_KINDS},
            "rates_per_1000_miles": {
                k: self.rates_per_1000_miles.get(k, 0.0) for k in EVENT_KINDS
            },
            "ade": {f"{h:.1f}": self.ade[h] for h in sorted(self.ade)},
            "trigger_histogram": dict(sorted(self.trigger_histogram.items())),
            "aborted_scenes": list(self.aborted_scenes),
        }


def aggregate_report(results: list[SceneResult]) -> SimReport:
    """Combine per-scene results; rates are events per 1000 miles driven."""
    results = sorted(results, key=lambda r: r.order)
    total_meters = sum(r.meters for r in results)
    if total_meters <= 0.0:
        raise ValueError("no miles driven; cannot normalize event rates")
    miles = total_meters / METERS_PER_MILE
    counts: dict = {}
    for r in results:
        for e in r.events:
            counts[e.kind] = counts.get(e.kind, 0) + 1
    rates = {k: counts.get(k, 0) / miles * 1000.0 for k in EVENT_KINDS}
    total_ticks = sum(r.ticks for r in results)
    non_ml = sum(r.non_ml_ticks for r in results)
    histogram: dict = {}
    for r in results:
        for cause, n in r.cause_counts.items():
            histogram[cause] = histogram.get(cause, 0) + n
    ade = {}
    for h in ADE_HORIZONS:
        ade[h] = float(np.mean([r.deviation_by_horizon[h] for r in results]))
    return SimReport(
        scene_count=len(results),
        miles=miles,
        total_ticks=total_ticks,
        non_ml_ticks=non_ml,
        fallback_usage=(non_ml / total_ticks) if total_ticks else 0.0,
        event_counts=counts,
        rates_per_1000_miles=rates,
        ade=ade,
        trigger_histogram=histogram,
        aborted_scenes=[r.scene_id for r in results if r.aborted],
    )


def _run_scene_task(args) -> SceneResult:
    (scene, params, fallback_cfg, sim_cfg, seed, fallback_enabled, order, keep_trace) = args
    return run_scene(
        scene, params, fallback_cfg, sim_cfg, seed,
        fallback_enabled=fallback_enabled, order=order, keep_trace=keep_trace,
    )


def run_suite(
    scenes: list[Scene],
    params: PolicyParams,
    fallback_cfg: FallbackConfig,
    sim_cfg: SimConfig,
    seed: int,
    fallback_enabled: bool = True,
    workers: int = 1,
    keep_traces: bool = False,
) -> tuple[SimReport, list[SceneResult]]:
    """Run every scene (optionally across worker processes) and aggregate.

    Results are independent of the worker count: each scene's rng derives
    from (seed, scene order) and aggregation is order-fixed.
    """
    tasks = [
        (scene, params, fallback_cfg, sim_cfg, seed, fallback_enabled, i, keep_traces)
        for i, scene in enumerate(scenes)
    ]
    if workers <= 1:
        results = [_run_scene_task(t) for t in tasks]
    else:
        import multiprocessing as mp

        with mp.Pool(processes=workers) as pool:
            results = pool.map(_run_scene_task, tasks, chunksize=1)
    results.sort(key=lambda r: r.order)
    return aggregate_report(results), results
