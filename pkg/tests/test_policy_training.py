import math

import numpy as np
import pytest

from conftest import make_frame, straight_map
from safeplan.geometry import TrajState, Trajectory
from safeplan.kinematics import ControlSequence, KinematicLimits
from safeplan.policy import (
    TrainingConfig,
    evaluate_ade,
    imitation_loss,
    perturb_sample,
    samples_from_scenes,
    train,
)
from safeplan.policy.training import TrainingSample
from safeplan.scenario import ScenarioConfig, generate_suite

LIMITS = KinematicLimits()


def _traj(poses, dt=0.1, v=1.0):
    states = tuple(TrajState(x=p[0], y=p[1], theta=p[2], v=v) for p in poses)
    return Trajectory(states=states, dt=dt)


def _controls(jerks, curvatures, dt=0.1):
    return ControlSequence(
        jerks=np.asarray(jerks, float), curvatures=np.asarray(curvatures, float), dt=dt
    )


class TestImitationLoss:
    def test_zero_when_exact(self):
        poses = [(0, 0, 0), (1, 0, 0), (2, 0, 0)]
        traj = _traj(poses)
        targets = np.array(poses[1:], dtype=float)
        loss = imitation_loss(traj, _controls([0, 0], [0, 0]), targets, 0.5, 0.5)
        assert loss == 0.0

    def test_unit_offset_single_step(self):
        traj = _traj([(0, 0, 0), (1, 0, 0)])
        targets = np.array([[0.0, 0.0, 0.0]])
        loss = imitation_loss(traj, _controls([0], [0]), targets, 0.0, 0.0)
        assert loss == 1.0

    def test_curvature_penalty_only(self):
        poses = [(0, 0, 0), (1, 0, 0), (2, 0, 0)]
        traj = _traj(poses)
        targets = np.array(poses[1:], dtype=float)
        loss = imitation_loss(traj, _controls([0, 0], [0.1, 0.1]), targets, 1.0, 0.0)
        assert abs(loss - 0.2) < 1e-12

    def test_heading_weight(self):
        traj = _traj([(0, 0, 0), (1, 0, 0.5)])
        targets = np.array([[1.0, 0.0, 0.0]])
        loss = imitation_loss(traj, _controls([0], [0]), targets, 0.0, 0.0, theta_weight=2.0)
        assert abs(loss - 1.0) < 1e-12

    def test_length_mismatch_rejected(self):
        traj = _traj([(0, 0, 0), (1, 0, 0)])
        with pytest.raises(ValueError):
            imitation_loss(traj, _controls([0], [0]), np.zeros((2, 3)), 0, 0)


class TestPerturbSample:
    def _sample(self):
        frame = make_frame(straight_map())
        targets = np.column_stack([0.8 * np.arange(1, 11), np.zeros(10), np.zeros(10)])
        return TrainingSample(frame=frame, targets=targets)

    def test_zero_magnitude_unchanged(self):
        cfg = TrainingConfig(perturb_prob=1.0, perturb_max_lateral=0.0, perturb_max_heading=0.0)
        rng = np.random.default_rng(0)
        sample = self._sample()
        out = perturb_sample(sample, cfg, rng)
        assert np.array_equal(out.targets, sample.targets)
        assert out.frame.ego == sample.frame.ego

    def test_zero_probability_identity(self):
        cfg = TrainingConfig(perturb_prob=0.0, perturb_max_lateral=1.0, perturb_max_heading=0.5)
        rng = np.random.default_rng(0)
        sample = self._sample()
        for _ in range(20):
            out = perturb_sample(sample, cfg, rng)
            assert out is sample

    def test_lateral_offset_shifts_targets(self):
        # force a +0.5 m lateral offset by stubbing the rng draws
        class _Rng:
            def random(self):
                return 0.0

            def uniform(self, lo, hi):
                if hi == 0.5:
                    return 0.5  # lateral
                return 0.0  # heading

        cfg = TrainingConfig(
            perturb_prob=1.0, perturb_max_lateral=0.5, perturb_max_heading=0.0
        )
        sample = self._sample()
        out = perturb_sample(sample, cfg, _Rng())
        assert np.allclose(out.targets[:, 1], sample.targets[:, 1] - 0.5, atol=1e-12)
        assert np.allclose(out.targets[:, 0], sample.targets[:, 0], atol=1e-12)
        assert abs(out.frame.ego.y - 0.5) < 1e-12


def _tiny_dataset(n_scenes=2, per_scene=4, horizon=10):
    cfg = ScenarioConfig(counts={"straight-follow": n_scenes}, seed=3)
    scenes = generate_suite(cfg)
    tcfg = TrainingConfig(
        embed=16, hidden=16, horizon_steps=horizon, epochs=60, batch_size=4,
        perturb_prob=0.0, seed=1, learning_rate=3e-3,
    )
    return samples_from_scenes(scenes, tcfg, per_scene=per_scene), tcfg


class TestTrain:
    def test_overfits_single_sample(self):
        import dataclasses

        # a braking scene so the straight-line init is a poor fit
        cfg = ScenarioConfig(counts={"lead-vehicle-braking": 1}, seed=3)
        scenes = generate_suite(cfg)
        tcfg = TrainingConfig(
            embed=16, hidden=16, horizon_steps=20, epochs=200, batch_size=1,
            perturb_prob=0.0, seed=1, learning_rate=3e-3, alpha=0.0, beta=0.0,
        )
        samples = samples_from_scenes(scenes, tcfg, per_scene=9)
        sample = max(samples, key=lambda s: abs(s.targets[-1, 0]) and abs(float(np.diff(s.targets[:, 0]).min())))
        params, losses = train([sample], tcfg, LIMITS)
        assert losses[-1] < 0.1 * losses[0], (losses[0], losses[-1])

    def test_deterministic_given_seed(self):
        samples, tcfg = _tiny_dataset()
        import dataclasses

        tcfg = dataclasses.replace(tcfg, epochs=3)
        _, l1 = train(samples, tcfg, LIMITS)
        _, l2 = train(samples, tcfg, LIMITS)
        assert l1 == l2

    def test_jerk_penalty_reduces_mean_jerk(self):
        import dataclasses

        samples, tcfg = _tiny_dataset(n_scenes=2, per_scene=4)
        base = dataclasses.replace(tcfg, epochs=40, alpha=0.0, beta=0.0)
        heavy = dataclasses.replace(tcfg, epochs=40, alpha=0.0, beta=3.0)
        p0, _ = train(samples, base, LIMITS)
        p1, _ = train(samples, heavy, LIMITS)
        cfg_eval = ScenarioConfig(counts={"straight-follow": 2}, seed=77)
        eval_samples = samples_from_scenes(generate_suite(cfg_eval), tcfg, per_scene=3)
        from safeplan.policy.features import encode_scene
        from safeplan.policy.network import forward

        def mean_abs_jerk(params):
            vals = []
            for s in eval_samples:
                els = encode_scene(s.frame, tcfg.history_depth, dt=tcfg.dt)
                ego = s.frame.ego
                start = TrajState(0, 0, 0, v=ego.v, a=ego.a, k=ego.k)
                _, controls = forward(params, els, start, LIMITS, dt=tcfg.dt)
                vals.append(np.abs(controls.jerks).mean())
            return np.mean(vals)

        assert mean_abs_jerk(p1) < mean_abs_jerk(p0)


class TestEvaluateAde:
    def test_perfect_predictions_zero(self):
        samples, tcfg = _tiny_dataset(n_scenes=1, per_scene=2)
        # train to near-zero then hand-check ADE is consistent; instead use
        # the direct contract: targets equal to the model output give zero
        from safeplan.policy.features import encode_scene
        from safeplan.policy.network import forward, init_params

        rng = np.random.default_rng(0)
        params = init_params(rng, embed=16, hidden=16, horizon_steps=tcfg.horizon_steps)
        remade = []
        for s in samples:
            els = encode_scene(s.frame, tcfg.history_depth, dt=tcfg.dt)
            ego = s.frame.ego
            start = TrajState(0, 0, 0, v=ego.v, a=ego.a, k=ego.k)
            traj, _ = forward(params, els, start, LIMITS, dt=tcfg.dt)
            fake_targets = np.column_stack([traj.positions[1:], traj.array[1:, 2]])
            remade.append(TrainingSample(frame=s.frame, targets=fake_targets))
        ade = evaluate_ade(params, remade, horizons=(0.5, 1.0), cfg=tcfg, limits=LIMITS)
        assert all(v == 0.0 for v in ade.values())

    def test_constant_lateral_offset(self):
        samples, tcfg = _tiny_dataset(n_scenes=1, per_scene=2)
        from safeplan.policy.features import encode_scene
        from safeplan.policy.network import forward, init_params

        rng = np.random.default_rng(0)
        params = init_params(rng, embed=16, hidden=16, horizon_steps=tcfg.horizon_steps)
        remade = []
        for s in samples:
            els = encode_scene(s.frame, tcfg.history_depth, dt=tcfg.dt)
            ego = s.frame.ego
            start = TrajState(0, 0, 0, v=ego.v, a=ego.a, k=ego.k)
            traj, _ = forward(params, els, start, LIMITS, dt=tcfg.dt)
            targets = np.column_stack(
                [traj.positions[1:, 0], traj.positions[1:, 1] + 1.0, traj.array[1:, 2]]
            )
            remade.append(TrainingSample(frame=s.frame, targets=targets))
        ade = evaluate_ade(params, remade, horizons=(0.5, 1.0), cfg=tcfg, limits=LIMITS)
        for v in ade.values():
            assert abs(v - 1.0) < 1e-12

    def test_horizon_beyond_plan_rejected(self):
        samples, tcfg = _tiny_dataset(n_scenes=1, per_scene=1)
        from safeplan.policy.network import init_params

        params = init_params(np.random.default_rng(0), embed=16, hidden=16,
                             horizon_steps=tcfg.horizon_steps)
        with pytest.raises(ValueError):
            evaluate_ade(params, samples, horizons=(10.0,), cfg=tcfg, limits=LIMITS)
