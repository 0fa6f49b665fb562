"""Per-agent future pose forecasts consumed by the fallback checks and the
simulator. Constant-velocity extrapolation is the default; log replay returns
the scene-logged future and exists mainly for oracle tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .world import AgentTrack

MODE_CONSTANT_VELOCITY = "constant-velocity"
MODE_LOG_REPLAY = "log-replay"


@dataclass(frozen=True, eq=False)
class AgentForecast:
    agent_id: str
    length: float
    width: float
    times: np.ndarray  # (N,)
    poses: np.ndarray  # (N, 3)
    speeds: np.ndarray  # (N,)


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Forecasts for all agents over a shared horizon aligned to the planner dt.

    Step i (1-based over the planning horizon) corresponds to now + i*dt;
    a zero horizon yields empty per-agent arrays.
    """

    horizon: float
    dt: float
    now: float
    agents: dict

    def forecast(self, agent_id: str) -> AgentForecast:
        return self.agents[agent_id]


def predict(
    agents: Sequence[AgentTrack],
    now: float,
    horizon: float,
    dt: float,
    mode: str = MODE_CONSTANT_VELOCITY,
) -> PredictionSet:
    """Forecast agent poses over the horizon; deterministic.

    Agents with no history up to `now` are treated as static at their first
    logged pose.
    """
    if mode not in (MODE_CONSTANT_VELOCITY, MODE_LOG_REPLAY):
        raise ValueError(f"unknown prediction mode {mode!r}")
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9:
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    times = now + dt * np.arange(1, steps + 1)

    forecasts = {}
    for agent in agents:
        if mode == MODE_LOG_REPLAY:
            poses = np.array([agent.pose_at(t) for t in times], dtype=float)
            poses = poses.reshape(steps, 3)
            speeds = np.array([agent.speed_at(t) for t in times], dtype=float)
        else:
            observed = agent.times <= now + 1e-9
            if observed.any():
                idx = int(np.nonzero(observed)[0][-1])
                pose = agent.poses[idx]
                speed = float(agent.speeds[idx])
            else:
                pose = agent.poses[0]
                speed = 0.0
            c = math.cos(pose[2])
            s = math.sin(pose[2])
            steps_arr = dt * np.arange(1, steps + 1)
            poses = np.empty((steps, 3))
            poses[:, 0] = pose[0] + speed * steps_arr * c
            poses[:, 1] = pose[1] + speed * steps_arr * s
            poses[:, 2] = pose[2]
            speeds = np.full(steps, speed)
        forecasts[agent.agent_id] = AgentForecast(
            agent_id=agent.agent_id,
            length=agent.length,
            width=agent.width,
            times=times.copy(),
            poses=poses,
            speeds=speeds,
        )
    return PredictionSet(horizon=horizon, dt=dt, now=now, agents=forecasts)
