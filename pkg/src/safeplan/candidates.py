"""Lane-aligned fallback candidates: speed keeping, distance keeping, and
emergency stopping, generated in the Frenet frame of the route centerline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DEFAULT_REAR_OVERHANG, Polyline, TrajState, Trajectory, wrap_angle
from .kinematics import KinematicLimits, derive_profile, step

# Below this along-route speed the lateral offset is held instead of
# recentered; lateral motion at crawl speeds produces unphysical poses.
LOW_SPEED_LATERAL_FREEZE = 1.0
# Candidates are only lane-aligned if the ego roughly faces along the route.
MIN_ALIGNMENT_COS = 0.1
MAX_PROJECTION_OFFSET = 6.0


class QuinticPolynomial:
    """x(t) with specified position/velocity/acceleration at both ends."""

    def __init__(self, xs, vxs, axs, xe, vxe, axe, horizon):
        self.a0 = xs
        self.a1 = vxs
        self.a2 = axs / 2.0
        t = horizon
        mat = np.array(
            [
                [t**3, t**4, t**5],
                [3 * t**2, 4 * t**3, 5 * t**4],
                [6 * t, 12 * t**2, 20 * t**3],
            ]
        )
        rhs = np.array(
            [
                xe - self.a0 - self.a1 * t - self.a2 * t**2,
                vxe - self.a1 - 2 * self.a2 * t,
                axe - 2 * self.a2,
            ]
        )
        self.a3, self.a4, self.a5 = np.linalg.solve(mat, rhs)

    def value(self, t):
        return (
            self.a0 + self.a1 * t + self.a2 * t**2
            + self.a3 * t**3 + self.a4 * t**4 + self.a5 * t**5
        )

    def first_derivative(self, t):
        return (
            self.a1 + 2 * self.a2 * t + 3 * self.a3 * t**2
            + 4 * self.a4 * t**3 + 5 * self.a5 * t**4
        )

    def second_derivative(self, t):
        return 2 * self.a2 + 6 * self.a3 * t + 12 * self.a4 * t**2 + 20 * self.a5 * t**3


class QuarticPolynomial:
    """x(t) with free final position: end conditions on velocity/acceleration."""

    def __init__(self, xs, vxs, axs, vxe, axe, horizon):
        self.a0 = xs
        self.a1 = vxs
        self.a2 = axs / 2.0
        t = horizon
        mat = np.array([[3 * t**2, 4 * t**3], [6 * t, 12 * t**2]])
        rhs = np.array([vxe - self.a1 - 2 * self.a2 * t, axe - 2 * self.a2])
        self.a3, self.a4 = np.linalg.solve(mat, rhs)

    def value(self, t):
        return self.a0 + self.a1 * t + self.a2 * t**2 + self.a3 * t**3 + self.a4 * t**4

    def first_derivative(self, t):
        return self.a1 + 2 * self.a2 * t + 3 * self.a3 * t**2 + 4 * self.a4 * t**3

    def second_derivative(self, t):
        return 2 * self.a2 + 6 * self.a3 * t + 12 * self.a4 * t**2


@dataclass(frozen=True, eq=False)
class LeadEstimate:
    """Predicted lead-agent motion along the route, one entry per plan step."""

    s: np.ndarray  # (T,) centerline arclength of the lead center
    speed: np.ndarray  # (T,)
    half_length: float


@dataclass(frozen=True, eq=False)
class Candidate:
    candidate_id: str
    kind: str  # speed-keeping | distance-keeping | emergency-stop
    trajectory: Trajectory


def _stop_guard(s: np.ndarray, sd: np.ndarray, sdd: np.ndarray) -> None:
    """Freeze the longitudinal profile once the speed would go negative."""
    below = np.nonzero(sd < 0.0)[0]
    if len(below) == 0:
        return
    i = int(below[0])
    hold = s[i - 1] if i > 0 else s[0]
    s[i:] = hold
    sd[i:] = 0.0
    sdd[i:] = 0.0


def _frenet_start(ego: TrajState, route: Polyline):
    proj = route.project_point(ego.x, ego.y)
    dtheta = wrap_angle(ego.theta - route.heading_at(max(proj.s, 1e-9)))
    cos_d = math.cos(dtheta)
    sin_d = math.sin(dtheta)
    s_d = ego.v * cos_d
    d_d = ego.v * sin_d
    # chain rule through dtheta' = k*v on a locally straight centerline
    s_dd = ego.a * cos_d - ego.v * ego.v * ego.k * sin_d
    d_dd = ego.a * sin_d + ego.v * ego.v * ego.k * cos_d
    return proj, dtheta, s_d, d_d, s_dd, d_dd


def _assemble(
    ego: TrajState,
    route: Polyline,
    s: np.ndarray,
    sd: np.ndarray,
    d: np.ndarray,
    dd: np.ndarray,
    dt: float,
) -> Trajectory:
    """Convert Frenet samples to a Cartesian trajectory with a derived profile.

    Index 0 is overwritten with the exact ego state so every candidate starts
    at the current (x, y, theta, v, a) without conversion error.
    """
    n = len(s)
    poses = np.empty((n, 3))
    prev_theta = ego.theta
    for i in range(n):
        si = min(max(float(s[i]), 0.0), route.length)
        idx, t = route.locate(si)
        base = route.points[idx] + t * (route.points[idx + 1] - route.points[idx])
        tan = route.tangents[idx]
        nor = route.normals[idx]
        poses[i, 0] = base[0] + d[i] * nor[0]
        poses[i, 1] = base[1] + d[i] * nor[1]
        vx = sd[i] * tan[0] + dd[i] * nor[0]
        vy = sd[i] * tan[1] + dd[i] * nor[1]
        if math.hypot(vx, vy) > 1e-9:
            prev_theta = math.atan2(vy, vx)
        poses[i, 2] = prev_theta
    traj = derive_profile(poses, dt)
    start = TrajState(
        x=ego.x, y=ego.y, theta=ego.theta, v=ego.v, a=ego.a, k=ego.k, j=ego.j
    )
    return Trajectory(states=(start,) + traj.states[1:], dt=dt)


def rollout_emergency_stop(
    ego: TrajState, limits: KinematicLimits, decel: float, steps: int, dt: float
) -> Trajectory:
    """Stop along the current curvature: constant-jerk ramp to the target
    deceleration, then hold until standstill. Always returnable."""
    jerk_cap = limits.comfort_max_jerk
    states = [ego]
    current = ego
    for _ in range(steps):
        target_a = -decel if current.v > 0.0 else 0.0
        j = min(max((target_a - current.a) / dt, -jerk_cap), jerk_cap)
        current = step(current, j, current.k, dt)
        states.append(current)
    return Trajectory(states=tuple(states), dt=dt)


def generate_candidates(
    ego: TrajState,
    route: Polyline | None,
    lead: LeadEstimate | None,
    limits: KinematicLimits,
    speed_offsets,
    time_gaps,
    estop_decels,
    steps: int,
    dt: float,
    ego_front_offset: float | None = None,
) -> list[Candidate]:
    """Build the lane-aligned candidate set for one planning cycle.

    The final candidate is always the rollout emergency stop, which serves
    as the last resort when nothing else is feasible.
    """
    horizon = steps * dt
    times = dt * np.arange(steps + 1)
    if ego_front_offset is None:
        ego_front_offset = 4.8 - DEFAULT_REAR_OVERHANG

    candidates: list[Candidate] = []
    frenet_ok = False
    if route is not None:
        proj, dtheta, s_d0, d_d0, s_dd0, d_dd0 = _frenet_start(ego, route)
        frenet_ok = (
            abs(proj.d) <= MAX_PROJECTION_OFFSET and math.cos(dtheta) >= MIN_ALIGNMENT_COS
        )

    if frenet_ok:
        if s_d0 >= LOW_SPEED_LATERAL_FREEZE:
            lat = QuinticPolynomial(proj.d, d_d0, d_dd0, 0.0, 0.0, 0.0, horizon)
            d_arr = lat.value(times)
            dd_arr = lat.first_derivative(times)
        else:
            d_arr = np.full(steps + 1, proj.d)
            dd_arr = np.zeros(steps + 1)

        idx = 0
        for off in speed_offsets:
            target = max(0.0, ego.v + off)
            lon = QuarticPolynomial(proj.s, s_d0, s_dd0, target, 0.0, horizon)
            s_arr = lon.value(times)
            sd_arr = lon.first_derivative(times)
            sdd_arr = lon.second_derivative(times)
            _stop_guard(s_arr, sd_arr, sdd_arr)
            traj = _assemble(ego, route, s_arr, sd_arr, d_arr, dd_arr, dt)
            candidates.append(
                Candidate(f"speed-keeping[{off:+.1f}]#{idx}", "speed-keeping", traj)
            )
            idx += 1

        if lead is not None:
            for gap in time_gaps:
                v_end = float(lead.speed[-1])
                s_target = float(lead.s[-1]) - (
                    gap * v_end + lead.half_length + ego_front_offset
                )
                if s_target <= proj.s:
                    continue
                lon = QuinticPolynomial(
                    proj.s, s_d0, s_dd0, s_target, v_end, 0.0, horizon
                )
                s_arr = lon.value(times)
                sd_arr = lon.first_derivative(times)
                sdd_arr = lon.second_derivative(times)
                _stop_guard(s_arr, sd_arr, sdd_arr)
                traj = _assemble(ego, route, s_arr, sd_arr, d_arr, dd_arr, dt)
                candidates.append(
                    Candidate(f"distance-keeping[{gap:.1f}s]#{idx}", "distance-keeping", traj)
                )
                idx += 1

        for decel in estop_decels:
            jerk = limits.comfort_max_jerk
            t1 = max(0.0, (s_dd0 + decel) / jerk)
            s_arr = np.empty(steps + 1)
            sd_arr = np.empty(steps + 1)
            sdd_arr = np.empty(steps + 1)
            for i, t in enumerate(times):
                if t < t1:
                    sdd = s_dd0 - jerk * t
                    sd = s_d0 + s_dd0 * t - 0.5 * jerk * t * t
                    s = proj.s + s_d0 * t + 0.5 * s_dd0 * t * t - jerk * t**3 / 6.0
                else:
                    sdd = min(s_dd0, -decel)
                    v1 = s_d0 + s_dd0 * t1 - 0.5 * jerk * t1 * t1
                    s1 = proj.s + s_d0 * t1 + 0.5 * s_dd0 * t1 * t1 - jerk * t1**3 / 6.0
                    tau = t - t1
                    sd = v1 + sdd * tau
                    s = s1 + v1 * tau + 0.5 * sdd * tau * tau
                s_arr[i] = s
                sd_arr[i] = sd
                sdd_arr[i] = sdd
            _stop_guard(s_arr, sd_arr, sdd_arr)
            traj = _assemble(ego, route, s_arr, sd_arr, d_arr, dd_arr, dt)
            candidates.append(
                Candidate(f"frenet-stop[{decel:.1f}]#{idx}", "emergency-stop", traj)
            )
            idx += 1

    # Last resort: brake along the current curvature through the kinematic
    # model. Exact start continuity and hard-limit feasibility by construction.
    strongest = max(estop_decels) if len(estop_decels) else -limits.comfort_min_accel
    traj = rollout_emergency_stop(ego, limits, strongest, steps, dt)
    candidates.append(Candidate("emergency-stop", "emergency-stop", traj))
    return candidates
