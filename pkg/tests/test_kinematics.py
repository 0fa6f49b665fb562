import math

import numpy as np
import pytest

from safeplan.fallback import check_dynamics
from safeplan.geometry import TrajState, Trajectory
from safeplan.kinematics import (
    ControlSequence,
    KinematicLimits,
    clip_controls,
    clip_controls_arrays,
    derive_profile,
    rollout,
    step,
)

DT = 0.1


def _seq(jerks, curvatures, dt=DT):
    return ControlSequence(jerks=np.asarray(jerks, float), curvatures=np.asarray(curvatures, float), dt=dt)


class TestLimits:
    def test_steering_angle_maps_to_curvature_cap(self):
        limits = KinematicLimits(max_steering_angle=0.5, wheelbase=2.7, max_curvature=1.0)
        assert abs(limits.curvature_cap - math.tan(0.5) / 2.7) < 1e-12

    def test_comfort_must_not_exceed_hard(self):
        with pytest.raises(ValueError):
            KinematicLimits(comfort_max_jerk=20.0)

    def test_comfort_view(self):
        limits = KinematicLimits()
        soft = limits.comfort()
        assert soft.max_jerk == limits.comfort_max_jerk
        assert soft.min_accel == limits.comfort_min_accel


class TestClipControls:
    def test_jerk_saturation(self):
        limits = KinematicLimits()
        state = TrajState(0, 0, 0, v=5.0)
        out = clip_controls(_seq([100.0], [0.0]), state, limits)
        assert out.jerks[0] == limits.max_jerk

    def test_within_bounds_unchanged(self):
        limits = KinematicLimits()
        state = TrajState(0, 0, 0, v=5.0)
        raw = _seq([1.0, -0.5, 0.2], [0.01, 0.005, 0.0])
        out = clip_controls(raw, state, limits)
        assert np.array_equal(out.jerks, raw.jerks)
        assert np.array_equal(out.curvatures, raw.curvatures)

    def test_idempotent(self):
        limits = KinematicLimits()
        state = TrajState(0, 0, 0, v=12.0, a=1.0, k=0.05)
        rng = np.random.default_rng(3)
        raw = _seq(rng.uniform(-30, 30, 40), rng.uniform(-0.5, 0.5, 40))
        once = clip_controls(raw, state, limits)
        twice = clip_controls(once, state, limits)
        assert np.array_equal(once.jerks, twice.jerks)
        assert np.array_equal(once.curvatures, twice.curvatures)

    def test_acceleration_window_narrows_jerk(self):
        limits = KinematicLimits(max_accel=2.0)
        state = TrajState(0, 0, 0, v=5.0, a=1.9)
        out = clip_controls(_seq([9.0, 9.0], [0.0, 0.0]), state, limits)
        # first step may only add 0.1 to a
        assert abs(out.jerks[0] - 1.0) < 1e-12
        assert out.jerks[1] == 0.0


class TestStep:
    def test_zero_fixed_point(self):
        s0 = TrajState(0, 0, 0)
        s1 = step(s0, 0.0, 0.0, DT)
        assert (s1.x, s1.y, s1.theta, s1.v, s1.a) == (0, 0, 0, 0, 0)

    def test_forward_motion(self):
        s0 = TrajState(0, 0, 0, v=2.0)
        s1 = step(s0, 0.0, 0.0, DT)
        assert s1.x == 0.2
        assert (s1.y, s1.theta, s1.v, s1.a) == (0, 0, 2.0, 0)

    def test_heading_rate(self):
        s0 = TrajState(0, 0, 0, v=1.0)
        s1 = step(s0, 0.0, 0.5, DT)
        assert abs(s1.theta - 0.05) < 1e-15

    def test_bitwise_matches_euler_formulas(self):
        # same update spelled out independently, same rounding order
        rng = np.random.default_rng(5)
        for _ in range(200):
            s = TrajState(
                rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-3, 3),
                v=rng.uniform(0, 15), a=rng.uniform(-3, 3),
            )
            j = rng.uniform(-10, 10)
            k = rng.uniform(-0.2, 0.2)
            got = step(s, j, k, DT)
            x = s.x + s.v * math.cos(s.theta) * DT
            y = s.y + s.v * math.sin(s.theta) * DT
            theta = s.theta + k * s.v * DT
            theta = math.fmod(theta + math.pi, 2 * math.pi)
            theta = theta + 2 * math.pi if theta <= 0 else theta
            theta -= math.pi
            v = s.v + s.a * DT
            v = 0.0 if v < 0 else v
            a = s.a + j * DT
            assert (got.x, got.y, got.theta, got.v, got.a) == (x, y, theta, v, a)

    def test_speed_floor(self):
        s0 = TrajState(0, 0, 0, v=0.1, a=-5.0)
        s1 = step(s0, 0.0, 0.0, DT)
        assert s1.v == 0.0


class TestRollout:
    def test_zero_controls_straight_line(self):
        limits = KinematicLimits()
        s0 = TrajState(0, 0, 0, v=1.0)
        traj = rollout(s0, _seq(np.zeros(10), np.zeros(10)), limits)
        assert len(traj) == 11
        xs = traj.array[:, 0]
        assert np.allclose(np.diff(xs), 0.1, atol=1e-15)
        assert np.all(traj.array[:, 1] == 0.0)

    def test_constant_curvature_heading_sum(self):
        limits = KinematicLimits()
        # start already at k=0.1 so the curvature-rate clamp stays inactive
        s0 = TrajState(0, 0, 0, v=1.0, k=0.1)
        traj = rollout(s0, _seq(np.zeros(10), np.full(10, 0.1)), limits)
        # Euler increments: sum of k*v*dt with constant v
        assert abs(traj.states[-1].theta - 0.1) < 1e-12

    def test_matches_repeated_step_bitwise(self):
        limits = KinematicLimits()
        rng = np.random.default_rng(9)
        s0 = TrajState(1.0, -2.0, 0.4, v=8.0, a=0.5, k=0.02)
        raw = _seq(rng.uniform(-20, 20, 40), rng.uniform(-0.4, 0.4, 40))
        traj = rollout(s0, raw, limits)
        clipped = clip_controls(raw, s0, limits)
        cur = s0
        for i in range(40):
            cur = step(cur, float(clipped.jerks[i]), float(clipped.curvatures[i]), DT)
            got = traj.states[i + 1]
            assert (got.x, got.y, got.theta, got.v, got.a) == (
                cur.x, cur.y, cur.theta, cur.v, cur.a,
            )

    def test_violating_controls_equal_preclipped_rollout(self):
        limits = KinematicLimits()
        s0 = TrajState(0, 0, 0, v=6.0)
        rng = np.random.default_rng(2)
        raw = _seq(rng.uniform(-50, 50, 20), rng.uniform(-1, 1, 20))
        direct = rollout(s0, raw, limits)
        pre = rollout(s0, clip_controls(raw, s0, limits), limits)
        assert np.array_equal(direct.array, pre.array)


def _random_valid_state(rng, limits):
    v = rng.uniform(0.0, 15.0)
    cap = limits.curvature_cap
    if v > 1e-6:
        cap = min(cap, limits.max_lateral_accel / (v * v))
    return TrajState(
        rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-3, 3),
        v=v,
        a=rng.uniform(limits.min_accel, limits.max_accel),
        k=rng.uniform(-cap, cap),
    )


class TestClippingFeasibilityConsistency:
    def test_random_rollouts_pass_dynamic_check(self):
        limits = KinematicLimits()
        rng = np.random.default_rng(31)
        for _ in range(1000):
            s0 = _random_valid_state(rng, limits)
            n = rng.integers(5, 41)
            raw = _seq(rng.uniform(-40, 40, n), rng.uniform(-1, 1, n))
            traj = rollout(s0, raw, limits)
            report = check_dynamics(traj, limits, comfort=False, tol=1e-9)
            assert report.violations == (), (s0, report.violations[:3])


class TestDeriveProfile:
    def test_collinear_uniform(self):
        poses = np.array([[0.1 * i, 0.0, 0.0] for i in range(10)])
        traj = derive_profile(poses, DT)
        arr = traj.array
        assert np.allclose(arr[:, 3], 1.0, atol=1e-12)  # v
        assert np.allclose(arr[:, 4], 0.0, atol=1e-9)  # a
        assert np.allclose(arr[:, 6], 0.0, atol=1e-9)  # j
        assert np.allclose(arr[:, 5], 0.0, atol=1e-12)  # k

    def test_circle_curvature(self):
        r = 20.0
        v = 10.0
        n = 40
        dphi = v * DT / r
        poses = np.array(
            [
                [r * math.sin(i * dphi), r * (1 - math.cos(i * dphi)), i * dphi]
                for i in range(n)
            ]
        )
        traj = derive_profile(poses, DT)
        k = traj.array[2 : n - 3, 5]
        assert np.all(np.abs(k - 1.0 / r) < 1e-3)

    def test_repeated_pose_gives_zero_speed(self):
        poses = np.array([[0.0, 0, 0], [0.1, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [0.3, 0, 0]])
        traj = derive_profile(poses, DT)
        assert traj.states[1].v == 0.0

    def test_non_uniform_timestamps_rejected(self):
        poses = np.zeros((5, 3))
        poses[:, 0] = [0, 0.1, 0.2, 0.3, 0.4]
        with pytest.raises(ValueError):
            derive_profile(poses, DT, timestamps=[0.0, 0.1, 0.25, 0.3, 0.4])

    def test_recovers_rollout_profile(self):
        limits = KinematicLimits()
        rng = np.random.default_rng(17)
        for _ in range(25):
            s0 = TrajState(0, 0, 0, v=rng.uniform(3, 12), a=rng.uniform(-0.5, 0.5))
            n = 30
            raw = _seq(rng.uniform(-2, 2, n), rng.uniform(-0.05, 0.05, n))
            traj = rollout(s0, raw, limits)
            derived = derive_profile(traj.array[:, :3], DT)
            interior = slice(2, n - 3)
            assert np.all(
                np.abs(derived.array[interior, 3] - traj.array[interior, 3]) < 0.05
            )
            assert np.all(
                np.abs(derived.array[interior, 5] - traj.array[interior, 5]) < 0.01
            )
