"""Unicycle kinematics: control clipping, Euler stepping, rollouts, and
reconstruction of speed/acceleration/curvature profiles from pose sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import TrajState, Trajectory, wrap_angle

DEFAULT_DT = 0.1
DEFAULT_HORIZON_STEPS = 40  # 4 s at the default dt

_SPEED_EPS = 1e-6


@dataclass(frozen=True)
class KinematicLimits:
    """Vehicle constraint parameters; hard bounds plus comfort variants.

    Comfort bounds must be no looser than the hard ones. The steering-angle
    limit maps to a curvature cap via tan(angle)/wheelbase.
    """

    max_jerk: float = 10.0
    max_accel: float = 3.0
    min_accel: float = -6.0
    max_curvature: float = 0.2
    max_steering_angle: float = 0.55
    wheelbase: float = 2.7
    max_lateral_accel: float = 4.0
    max_curvature_rate: float = 0.4
    max_steering_jerk: float = 1.5
    comfort_max_jerk: float = 2.5
    comfort_max_accel: float = 2.0
    comfort_min_accel: float = -3.5
    comfort_max_lateral_accel: float = 2.0

    def __post_init__(self):
        positive = (
            self.max_jerk,
            self.max_accel,
            self.max_curvature,
            self.max_steering_angle,
            self.wheelbase,
            self.max_lateral_accel,
            self.max_curvature_rate,
            self.max_steering_jerk,
            self.comfort_max_jerk,
            self.comfort_max_accel,
            self.comfort_max_lateral_accel,
        )
        if not all(p > 0.0 for p in positive):
            raise ValueError("all limit maxima must be positive")
        if self.min_accel >= 0.0 or self.comfort_min_accel >= 0.0:
            raise ValueError("min_accel bounds must be negative")
        if (
            self.comfort_max_jerk > self.max_jerk
            or self.comfort_max_accel > self.max_accel
            or self.comfort_min_accel < self.min_accel
            or self.comfort_max_lateral_accel > self.max_lateral_accel
        ):
            raise ValueError("comfort bounds must be no looser than hard bounds")

    @property
    def curvature_cap(self) -> float:
        return min(self.max_curvature, math.tan(self.max_steering_angle) / self.wheelbase)

    def comfort(self) -> "KinematicLimits":
        """Limits with the comfort variants substituted for the hard bounds."""
        return replace(
            self,
            max_jerk=self.comfort_max_jerk,
            max_accel=self.comfort_max_accel,
            min_accel=self.comfort_min_accel,
            max_lateral_accel=self.comfort_max_lateral_accel,
        )


@dataclass(frozen=True, eq=False)
class ControlSequence:
    """Per-step (jerk, curvature) commands at a fixed dt."""

    jerks: np.ndarray
    curvatures: np.ndarray
    dt: float

    def __post_init__(self):
        jerks = np.asarray(self.jerks, dtype=float)
        curvatures = np.asarray(self.curvatures, dtype=float)
        object.__setattr__(self, "jerks", jerks)
        object.__setattr__(self, "curvatures", curvatures)
        if jerks.ndim != 1 or jerks.shape != curvatures.shape or len(jerks) < 1:
            raise ValueError("controls need matching 1-D jerk/curvature arrays")
        if not (np.isfinite(jerks).all() and np.isfinite(curvatures).all()):
            raise ValueError("controls must be finite")
        if not (self.dt > 0.0):
            raise ValueError(f"invalid dt {self.dt}")

    def __len__(self) -> int:
        return len(self.jerks)


def clip_controls_arrays(
    raw_jerks: np.ndarray,
    raw_curvatures: np.ndarray,
    state: TrajState,
    limits: KinematicLimits,
    dt: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sequentially clamp controls so the implied rollout stays inside limits.

    Per step: jerk is clamped to +-max_jerk, then narrowed so the integrated
    acceleration stays in [min_accel, max_accel]; curvature is rate-limited
    against the previous curvature (curvature rate and steering jerk), then
    clamped to the geometric cap and the lateral-acceleration cap at the speed
    the state will carry. Returns (jerks, curvatures, jerk_passthrough,
    curvature_passthrough) where the passthrough masks are 1.0 where the raw
    command survived unchanged.
    """
    n = len(raw_jerks)
    out_j = np.empty(n)
    out_k = np.empty(n)
    mask_j = np.empty(n)
    mask_k = np.empty(n)
    a = state.a
    v = state.v
    k_prev = state.k
    cap_geom = limits.curvature_cap
    for t in range(n):
        j = raw_jerks[t]
        j_lo = max(-limits.max_jerk, (limits.min_accel - a) / dt)
        j_hi = min(limits.max_jerk, (limits.max_accel - a) / dt)
        if j_lo > j_hi:
            # a is already outside its bounds; push it back at max jerk.
            j_clipped = j_lo if a < limits.min_accel else j_hi
        else:
            j_clipped = min(max(j, j_lo), j_hi)
        out_j[t] = j_clipped
        mask_j[t] = 1.0 if j_clipped == j else 0.0

        v_next = v + a * dt
        if v_next < 0.0:
            v_next = 0.0
        cap = cap_geom
        if v_next > _SPEED_EPS:
            cap = min(cap, limits.max_lateral_accel / (v_next * v_next))
        delta = limits.max_curvature_rate * dt
        if v_next > _SPEED_EPS:
            delta = min(delta, limits.max_steering_jerk * dt / v_next)
        k = raw_curvatures[t]
        k_rate = min(max(k, k_prev - delta), k_prev + delta)
        k_clipped = min(max(k_rate, -cap), cap)
        out_k[t] = k_clipped
        mask_k[t] = 1.0 if k_clipped == k else 0.0

        a = a + j_clipped * dt
        v = v_next
        k_prev = k_clipped
    return out_j, out_k, mask_j, mask_k


def clip_controls(
    raw: ControlSequence, state: TrajState, limits: KinematicLimits
) -> ControlSequence:
    """Clamp a control sequence to the vehicle limits; idempotent."""
    jerks, curvatures, _, _ = clip_controls_arrays(
        raw.jerks, raw.curvatures, state, limits, raw.dt
    )
    return ControlSequence(jerks=jerks, curvatures=curvatures, dt=raw.dt)


def step(state: TrajState, jerk: float, curvature: float, dt: float) -> TrajState:
    """Single explicit-Euler update; the output records the applied controls.

    Speed is floored at zero after the update (no reverse driving).
    """
    if not dt > 0.0:
        raise ValueError(f"invalid dt {dt}")
    x = state.x + state.v * math.cos(state.theta) * dt
    y = state.y + state.v * math.sin(state.theta) * dt
    theta = wrap_angle(state.theta + curvature * state.v * dt)
    v = state.v + state.a * dt
    if v < 0.0:
        v = 0.0
    a = state.a + jerk * dt
    return TrajState(x=x, y=y, theta=theta, v=v, a=a, k=curvature, j=jerk)


def rollout_arrays(
    state: TrajState, jerks: np.ndarray, curvatures: np.ndarray, dt: float
) -> np.ndarray:
    """Integrate already-clipped controls; returns an (N+1, 7) state array."""
    n = len(jerks)
    out = np.empty((n + 1, 7))
    out[0] = (state.x, state.y, state.theta, state.v, state.a, state.k, state.j)
    x, y, theta, v, a = state.x, state.y, state.theta, state.v, state.a
    for t in range(n):
        x = x + v * math.cos(theta) * dt
        y = y + v * math.sin(theta) * dt
        theta = wrap_angle(theta + curvatures[t] * v * dt)
        v_next = v + a * dt
        if v_next < 0.0:
            v_next = 0.0
        a = a + jerks[t] * dt
        v = v_next
        out[t + 1] = (x, y, theta, v, a, curvatures[t], jerks[t])
    return out


def trajectory_from_array(arr: np.ndarray, dt: float) -> Trajectory:
    states = tuple(
        TrajState(x=r[0], y=r[1], theta=r[2], v=r[3], a=r[4], k=r[5], j=r[6])
        for r in arr
    )
    return Trajectory(states=states, dt=dt)


def rollout(
    state: TrajState, controls: ControlSequence, limits: KinematicLimits
) -> Trajectory:
    """Clip controls against the limits, then integrate from the state."""
    jerks, curvatures, _, _ = clip_controls_arrays(
        controls.jerks, controls.curvatures, state, limits, controls.dt
    )
    arr = rollout_arrays(state, jerks, curvatures, controls.dt)
    return trajectory_from_array(arr, controls.dt)


def derive_profile(
    poses, dt: float, timestamps=None
) -> Trajectory:
    """Reconstruct (v, a, k, j) for a uniformly sampled pose sequence.

    Speeds come from forward differences of arclength, acceleration and jerk
    from successive differences (boundary values replicated), curvature from
    heading change per arclength with k = 0 wherever the displacement is
    below 1e-6 m.
    """
    poses = np.asarray(poses, dtype=float)
    if poses.ndim != 2 or poses.shape[1] != 3 or poses.shape[0] < 4:
        raise ValueError("derive_profile needs an (N>=4, 3) pose array")
    if not dt > 0.0:
        raise ValueError(f"invalid dt {dt}")
    if timestamps is not None:
        ts = np.asarray(timestamps, dtype=float)
        if ts.shape[0] != poses.shape[0]:
            raise ValueError("timestamps length must match poses")
        if np.abs(np.diff(ts) - dt).max() > 1e-9:
            raise ValueError("non-uniform timestamps")

    n = len(poses)
    ds = np.hypot(np.diff(poses[:, 0]), np.diff(poses[:, 1]))
    v = np.empty(n)
    v[:-1] = ds / dt
    v[-1] = v[-2]
    a = np.empty(n)
    a[:-1] = np.diff(v) / dt
    a[-1] = a[-2]
    j = np.empty(n)
    j[:-1] = np.diff(a) / dt
    j[-1] = j[-2]
    dtheta = np.array([wrap_angle(t) for t in np.diff(poses[:, 2])])
    with np.errstate(divide="ignore", invalid="ignore"):
        k_seg = np.where(ds > 1e-6, dtheta / ds, 0.0)
    # curvature attributed to the state a heading change leads INTO, matching
    # how rollouts record the applied control on the reached state
    k = np.empty(n)
    k[1:] = k_seg
    k[0] = k[1]

    states = tuple(
        TrajState(
            x=poses[i, 0], y=poses[i, 1], theta=poses[i, 2],
            v=v[i], a=a[i], k=k[i], j=j[i],
        )
        for i in range(n)
    )
    return Trajectory(states=states, dt=dt)
