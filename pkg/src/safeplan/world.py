"""Scene-level domain objects: agent tracks, HD-map model, frames, scenes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .geometry import OrientedBox, Polyline, TrajState


class LightState(str, Enum):
    RED = "red"
    YELLOW = "yellow"
    GREEN = "green"


class ObjectType(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"


@dataclass(frozen=True, eq=False)
class AgentTrack:
    """Perceived agent with timestamped poses (past and scene-logged future).

    Poses are anchored at the body-box center. Timestamps must be strictly
    increasing and aligned with the speeds array.
    """

    agent_id: str
    object_type: ObjectType
    length: float
    width: float
    times: np.ndarray  # (M,)
    poses: np.ndarray  # (M, 3) x, y, theta
    speeds: np.ndarray  # (M,)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        poses = np.asarray(self.poses, dtype=float)
        speeds = np.asarray(self.speeds, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "speeds", speeds)
        if poses.ndim != 2 or poses.shape[1] != 3:
            raise ValueError("agent poses must be (M, 3)")
        if not (len(times) == len(poses) == len(speeds)):
            raise ValueError("agent times/poses/speeds lengths differ")
        if len(times) > 1 and not (np.diff(times) > 0.0).all():
            raise ValueError("agent timestamps must be strictly increasing")
        if not (self.length > 0.0 and self.width > 0.0):
            raise ValueError("agent needs positive dims")

    def index_at(self, t: float) -> int:
        """Index of the latest sample with time <= t (clamped to 0)."""
        i = int(np.searchsorted(self.times, t + 1e-9, side="right")) - 1
        return min(max(i, 0), len(self.times) - 1)

    def pose_at(self, t: float) -> np.ndarray:
        return self.poses[self.index_at(t)]

    def speed_at(self, t: float) -> float:
        return float(self.speeds[self.index_at(t)])

    def footprint_at(self, t: float) -> OrientedBox:
        p = self.pose_at(t)
        return OrientedBox(x=p[0], y=p[1], heading=p[2], length=self.length, width=self.width)

    def history_until(self, t: float, depth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Up to depth most recent samples at times <= t (times, poses, speeds)."""
        end = int(np.searchsorted(self.times, t + 1e-9, side="right"))
        start = max(0, end - depth)
        if end == 0:
            # nothing observed yet; fall back to the first sample as static
            return self.times[:1], self.poses[:1], np.zeros(1)
        return self.times[start:end], self.poses[start:end], self.speeds[start:end]


@dataclass(frozen=True, eq=False)
class LaneSegment:
    lane_id: str
    centerline: Polyline
    width: float
    successors: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.width > 0.0:
            raise ValueError("lane width must be positive")

    @cached_property
    def polygon(self) -> np.ndarray:
        """Corridor polygon: the centerline swept by half the lane width."""
        pts = self.centerline.points
        seg_n = self.centerline.normals
        vertex_n = np.empty_like(pts)
        vertex_n[0] = seg_n[0]
        vertex_n[-1] = seg_n[-1]
        if len(seg_n) > 1:
            mid = seg_n[:-1] + seg_n[1:]
            norm = np.hypot(mid[:, 0], mid[:, 1])
            norm = np.where(norm < 1e-9, 1.0, norm)
            vertex_n[1:-1] = mid / norm[:, None]
        hw = 0.5 * self.width
        left = pts + hw * vertex_n
        right = pts - hw * vertex_n
        return np.vstack([left, right[::-1]])


@dataclass(frozen=True)
class StopLine:
    """Stop line segment; control is either a traffic-light id or 'stop_sign'."""

    line_id: str
    ax: float
    ay: float
    bx: float
    by: float
    control: str

    @property
    def midpoint(self) -> tuple[float, float]:
        return (0.5 * (self.ax + self.bx), 0.5 * (self.ay + self.by))


@dataclass(frozen=True)
class TrafficLight:
    light_id: str
    stop_line_id: str


@dataclass(frozen=True, eq=False)
class MapModel:
    """Static road context: lanes, crossings, signals, drivable area, route."""

    lanes: tuple[LaneSegment, ...]
    crosswalks: tuple[np.ndarray, ...]
    stop_lines: tuple[StopLine, ...]
    lights: tuple[TrafficLight, ...]
    drivable: tuple[np.ndarray, ...]
    route_lane_ids: tuple[str, ...]
    route: Polyline
    conflict_regions: tuple[np.ndarray, ...] = ()
    static_obstacles: tuple[OrientedBox, ...] = ()

    def __post_init__(self):
        lane_ids = {lane.lane_id for lane in self.lanes}
        for rid in self.route_lane_ids:
            if rid not in lane_ids:
                raise ValueError(f"route lane id {rid!r} not in map lanes")
        sl_ids = {sl.line_id for sl in self.stop_lines}
        for light in self.lights:
            if light.stop_line_id not in sl_ids:
                raise ValueError(f"light {light.light_id!r} controls unknown stop line")

    def stop_line_by_id(self, line_id: str) -> StopLine:
        for sl in self.stop_lines:
            if sl.line_id == line_id:
                return sl
        raise KeyError(line_id)

    def route_lane_width(self) -> float:
        widths = [lane.width for lane in self.lanes if lane.lane_id in self.route_lane_ids]
        return min(widths) if widths else 3.5


@dataclass(frozen=True, eq=False)
class SceneFrame:
    """World snapshot handed to the planner: one ego plus everything around it."""

    timestamp: float
    ego: TrajState
    ego_length: float
    ego_width: float
    agents: tuple[AgentTrack, ...]
    light_states: dict
    map: MapModel
    ego_history: tuple[TrajState, ...] = ()

    def __post_init__(self):
        known = {light.light_id for light in self.map.lights}
        for lid in self.light_states:
            if lid not in known:
                raise ValueError(f"light state for unknown light {lid!r}")


@dataclass(frozen=True)
class LightPhase:
    light_id: str
    start: float
    end: float
    state: LightState


@dataclass(frozen=True, eq=False)
class Scene:
    """A logged 25-second episode: map, ego log, agent logs, light schedule."""

    scene_id: str
    dt: float
    duration: float
    map: MapModel
    ego_length: float
    ego_width: float
    ego_states: tuple[TrajState, ...]
    agents: tuple[AgentTrack, ...]
    light_schedule: tuple[LightPhase, ...] = ()

    def __post_init__(self):
        expected = int(round(self.duration / self.dt)) + 1
        if len(self.ego_states) != expected:
            raise ValueError(
                f"scene {self.scene_id!r}: {len(self.ego_states)} ego states, "
                f"expected {expected} for {self.duration}s at dt={self.dt}"
            )

    @property
    def n_ticks(self) -> int:
        return len(self.ego_states) - 1

    def light_states_at(self, t: float) -> dict:
        states = {}
        for phase in self.light_schedule:
            if phase.start - 1e-9 <= t < phase.end - 1e-9:
                states[phase.light_id] = phase.state
        # default any scheduled-but-inactive light to red
        for light in self.map.lights:
            states.setdefault(light.light_id, LightState.RED)
        return states

    def frame_at(
        self,
        tick: int,
        ego: TrajState | None = None,
        ego_history: tuple[TrajState, ...] | None = None,
        agents: tuple[AgentTrack, ...] | None = None,
    ) -> SceneFrame:
        """Frame at a tick, with optional simulated ego/agents overriding the log."""
        t = tick * self.dt
        if ego is None:
            ego = self.ego_states[tick]
        if ego_history is None:
            ego_history = self.ego_states[max(0, tick - 10):tick]
        return SceneFrame(
            timestamp=t,
            ego=ego,
            ego_length=self.ego_length,
            ego_width=self.ego_width,
            agents=self.agents if agents is None else agents,
            light_states=self.light_states_at(t),
            map=self.map,
            ego_history=tuple(ego_history),
        )
