import math

import numpy as np
import pytest

from safeplan.prediction import MODE_CONSTANT_VELOCITY, MODE_LOG_REPLAY, predict
from safeplan.world import AgentTrack, ObjectType


def _track(times, poses, speeds, agent_id="a0"):
    return AgentTrack(
        agent_id=agent_id,
        object_type=ObjectType.VEHICLE,
        length=4.5,
        width=1.9,
        times=np.asarray(times, float),
        poses=np.asarray(poses, float),
        speeds=np.asarray(speeds, float),
    )


class TestConstantVelocity:
    def test_static_agent_stays_put(self):
        track = _track([0.0, 0.1], [[5, 2, 0.3], [5, 2, 0.3]], [0.0, 0.0])
        preds = predict([track], now=0.1, horizon=1.0, dt=0.1)
        f = preds.forecast("a0")
        assert np.allclose(f.poses, [5, 2, 0.3])
        assert np.all(f.speeds == 0.0)

    def test_linear_extrapolation(self):
        track = _track([0.0], [[0, 0, 0]], [1.0])
        preds = predict([track], now=0.0, horizon=1.0, dt=0.1)
        f = preds.forecast("a0")
        assert f.poses.shape == (10, 3)
        assert np.allclose(f.poses[:, 0], 0.1 * np.arange(1, 11))
        assert np.allclose(f.poses[:, 1], 0.0)
        assert np.all(f.speeds == 1.0)

    def test_zero_horizon_empty(self):
        track = _track([0.0], [[0, 0, 0]], [1.0])
        preds = predict([track], now=0.0, horizon=0.0, dt=0.1)
        assert preds.forecast("a0").poses.shape == (0, 3)

    def test_constant_speed_and_heading(self):
        track = _track([0.0], [[3, -1, 1.1]], [4.2])
        preds = predict([track], now=0.0, horizon=4.0, dt=0.1)
        f = preds.forecast("a0")
        assert np.all(f.speeds == 4.2)
        assert np.all(f.poses[:, 2] == f.poses[0, 2])
        steps = np.hypot(np.diff(f.poses[:, 0]), np.diff(f.poses[:, 1]))
        assert np.allclose(steps, 0.42, atol=1e-12)

    def test_agent_without_history_is_static(self):
        track = _track([5.0], [[7, 7, 0]], [3.0])
        preds = predict([track], now=0.0, horizon=0.5, dt=0.1)
        f = preds.forecast("a0")
        assert np.allclose(f.poses[:, :2], [7, 7])
        assert np.all(f.speeds == 0.0)

    def test_bad_horizon_rejected(self):
        track = _track([0.0], [[0, 0, 0]], [1.0])
        with pytest.raises(ValueError):
            predict([track], now=0.0, horizon=0.55, dt=0.1)


class TestLogReplay:
    def test_exact_logged_future(self):
        times = np.arange(0.0, 2.01, 0.1)
        poses = np.column_stack([times * 2.0, np.zeros_like(times), np.zeros_like(times)])
        track = _track(times, poses, np.full_like(times, 2.0))
        preds = predict([track], now=0.5, horizon=1.0, dt=0.1, mode=MODE_LOG_REPLAY)
        f = preds.forecast("a0")
        expect = poses[6:16]
        assert np.array_equal(f.poses, expect)

    def test_holds_last_pose_past_log_end(self):
        track = _track([0.0, 0.1], [[0, 0, 0], [1, 0, 0]], [1.0, 1.0])
        preds = predict([track], now=0.1, horizon=0.5, dt=0.1, mode=MODE_LOG_REPLAY)
        f = preds.forecast("a0")
        assert np.all(f.poses[:, 0] == 1.0)
