"""Imitation training: L1 pose loss with control-magnitude penalties,
pose-perturbation augmentation, exact gradients through the kinematic
rollout, Adam optimization, and open-loop displacement-error evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..geometry import (
    TrajState,
    Trajectory,
    from_ego_frame,
    to_ego_frame,
    wrap_angle,
)
from ..kinematics import ControlSequence, KinematicLimits, clip_controls_arrays
from ..world import Scene, SceneFrame
from .features import ElementCaps, encode_scene
from .network import (
    PolicyParams,
    backward_controls,
    init_params,
    raw_controls,
    split_controls,
    zero_grads,
)


@dataclass(frozen=True)
class TrainingConfig:
    alpha: float = 0.05  # curvature-magnitude penalty
    beta: float = 0.02  # jerk-magnitude penalty
    theta_weight: float = 1.0  # meters per radian in the pose L1
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 20
    perturb_prob: float = 0.3
    perturb_max_lateral: float = 0.5
    perturb_max_heading: float = 0.2
    seed: int = 0
    embed: int = 64
    hidden: int = 64
    horizon_steps: int = 40
    dt: float = 0.1
    history_depth: int = 10

    def __post_init__(self):
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("alpha and beta must be non-negative")
        if not (0.0 <= self.perturb_prob <= 1.0):
            raise ValueError("perturbation probability must be in [0, 1]")


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """One imitation example: a frame plus the next T logged poses, expressed
    in the frame's ego coordinates."""

    frame: SceneFrame
    targets: np.ndarray  # (T, 3)
    scene_id: str = ""
    tick: int = 0


def imitation_loss(
    pred: Trajectory,
    controls: ControlSequence,
    targets: np.ndarray,
    alpha: float,
    beta: float,
    theta_weight: float = 1.0,
) -> float:
    """L1 pose loss (x, y, wrapped heading) plus per-step control penalties."""
    targets = np.asarray(targets, dtype=float)
    horizon = len(pred) - 1
    if targets.shape != (horizon, 3) or len(controls) != horizon:
        raise ValueError(
            f"length mismatch: {len(pred)} states, {targets.shape} targets, "
            f"{len(controls)} controls"
        )
    arr = pred.array
    dx = np.abs(arr[1:, 0] - targets[:, 0])
    dy = np.abs(arr[1:, 1] - targets[:, 1])
    dth = np.abs([wrap_angle(t) for t in arr[1:, 2] - targets[:, 2]])
    reg = alpha * np.abs(controls.curvatures) + beta * np.abs(controls.jerks)
    return float(dx.sum() + dy.sum() + theta_weight * dth.sum() + reg.sum())


def _sign(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def _rollout_loss(
    start: TrajState,
    raw: np.ndarray,
    limits: KinematicLimits,
    dt: float,
    targets: np.ndarray,
    cfg: TrainingConfig,
) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient with respect to the raw control vector.

    Forward: clip controls, explicit-Euler rollout, L1 pose loss with control
    penalties. Reverse: backpropagation through time with pass-through /
    zero subgradients at the clip, speed floor, and absolute values.
    """
    horizon = len(targets)
    raw_j, raw_k = split_controls(raw, horizon)
    jerks, curvatures, mask_j, mask_k = clip_controls_arrays(
        raw_j, raw_k, start, limits, dt
    )
    # magnitude penalties act on the network's raw predictions: unlike the
    # clipped values they keep a restoring gradient when an output saturates
    # outside the clip bounds (where the pose gradient is masked to zero)

    x = np.empty(horizon + 1)
    y = np.empty(horizon + 1)
    th = np.empty(horizon + 1)
    v = np.empty(horizon + 1)
    a = np.empty(horizon + 1)
    floored = np.empty(horizon, dtype=bool)
    x[0], y[0], th[0], v[0], a[0] = start.x, start.y, start.theta, start.v, start.a
    for t in range(horizon):
        x[t + 1] = x[t] + v[t] * math.cos(th[t]) * dt
        y[t + 1] = y[t] + v[t] * math.sin(th[t]) * dt
        th[t + 1] = wrap_angle(th[t] + curvatures[t] * v[t] * dt)
        v_next = v[t] + a[t] * dt
        floored[t] = v_next < 0.0
        v[t + 1] = 0.0 if floored[t] else v_next
        a[t + 1] = a[t] + jerks[t] * dt

    dth_err = np.array([wrap_angle(d) for d in th[1:] - targets[:, 2]])
    loss = float(
        np.abs(x[1:] - targets[:, 0]).sum()
        + np.abs(y[1:] - targets[:, 1]).sum()
        + cfg.theta_weight * np.abs(dth_err).sum()
        + cfg.alpha * np.abs(curvatures).sum()
        + cfg.beta * np.abs(jerks).sum()
    )

    gx = np.array([_sign(e) for e in x[1:] - targets[:, 0]])
    gy = np.array([_sign(e) for e in y[1:] - targets[:, 1]])
    gth = cfg.theta_weight * np.array([_sign(e) for e in dth_err])
    gv = np.zeros(horizon)
    ga = np.zeros(horizon)
    gk = cfg.alpha * np.array([_sign(c) for c in curvatures])
    gj = cfg.beta * np.array([_sign(c) for c in jerks])

    # reverse scan over the Euler recurrence; index t addresses state t+1
    run_x = run_y = run_th = run_v = run_a = 0.0
    for t in range(horizon - 1, -1, -1):
        run_x += gx[t]
        run_y += gy[t]
        run_th += gth[t]
        run_v += gv[t]
        run_a += ga[t]
        gk[t] += run_th * v[t] * dt
        gj[t] += run_a * dt
        pass_v = 0.0 if floored[t] else 1.0
        ct = math.cos(th[t])
        st = math.sin(th[t])
        new_th = run_th + run_x * (-v[t] * st * dt) + run_y * (v[t] * ct * dt)
        new_v = (
            run_x * ct * dt
            + run_y * st * dt
            + run_th * curvatures[t] * dt
            + run_v * pass_v
        )
        new_a = run_v * dt * pass_v + run_a
        run_th = new_th
        run_v = new_v
        run_a = new_a

    draw = np.concatenate([gj * mask_j, gk * mask_k])
    return loss, draw


def sample_loss_and_grads(
    params: PolicyParams,
    sample: TrainingSample,
    cfg: TrainingConfig,
    limits: KinematicLimits,
    caps: ElementCaps = ElementCaps(),
) -> tuple[float, dict[str, np.ndarray]]:
    elements = encode_scene(sample.frame, cfg.history_depth, caps, dt=cfg.dt)
    out, cache = raw_controls(params, elements)
    ego = sample.frame.ego
    start = TrajState(0.0, 0.0, 0.0, v=ego.v, a=ego.a, k=ego.k, j=ego.j)
    loss, draw = _rollout_loss(start, out, limits, cfg.dt, sample.targets, cfg)
    grads = backward_controls(params, cache, draw)
    return loss, grads


def gradient(
    params: PolicyParams,
    batch: list[TrainingSample],
    cfg: TrainingConfig,
    limits: KinematicLimits | None = None,
) -> tuple[dict[str, np.ndarray], float]:
    """Exact gradient of the mean imitation loss over a batch."""
    if not batch:
        raise ValueError("gradient needs a non-empty batch")
    limits = limits or KinematicLimits()
    total = zero_grads(params)
    loss_sum = 0.0
    for sample in batch:
        loss, grads = sample_loss_and_grads(params, sample, cfg, limits)
        loss_sum += loss
        for name in total:
            total[name] += grads[name]
    n = float(len(batch))
    for name in total:
        total[name] /= n
    return total, loss_sum / n


def perturb_sample(
    sample: TrainingSample, cfg: TrainingConfig, rng: np.random.Generator
) -> TrainingSample:
    """With cfg.perturb_prob, offset the ego start pose laterally and in
    heading and re-express the targets in the perturbed frame. The logged
    future stays untouched; the kinematic decoder absorbs the mismatch."""
    if cfg.perturb_prob <= 0.0:
        return sample
    if rng.random() >= cfg.perturb_prob:
        return sample
    d_off = rng.uniform(-cfg.perturb_max_lateral, cfg.perturb_max_lateral)
    th_off = rng.uniform(-cfg.perturb_max_heading, cfg.perturb_max_heading)
    if d_off == 0.0 and th_off == 0.0:
        return sample
    frame = sample.frame
    ego = frame.ego
    old_pose = ego.pose
    new_pose = (
        ego.x - d_off * math.sin(ego.theta),
        ego.y + d_off * math.cos(ego.theta),
        wrap_angle(ego.theta + th_off),
    )
    new_ego = TrajState(
        x=new_pose[0], y=new_pose[1], theta=new_pose[2], v=ego.v, a=ego.a, k=ego.k, j=ego.j
    )
    new_frame = SceneFrame(
        timestamp=frame.timestamp,
        ego=new_ego,
        ego_length=frame.ego_length,
        ego_width=frame.ego_width,
        agents=frame.agents,
        light_states=frame.light_states,
        map=frame.map,
        ego_history=frame.ego_history,
    )
    new_targets = np.empty_like(sample.targets)
    for i, t in enumerate(sample.targets):
        world = from_ego_frame((t[0], t[1], t[2]), old_pose)
        new_targets[i] = to_ego_frame(world, new_pose)
    return TrainingSample(
        frame=new_frame, targets=new_targets, scene_id=sample.scene_id, tick=sample.tick
    )


class Adam:
    def __init__(self, params: PolicyParams, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.m = zero_grads(params)
        self.v = zero_grads(params)
        self.t = 0

    def update(self, params: PolicyParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, g in grads.items():
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            step = self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)
            getattr(params, name)[...] -= step


def train(
    dataset: list[TrainingSample],
    cfg: TrainingConfig,
    limits: KinematicLimits | None = None,
) -> tuple[PolicyParams, list[float]]:
    """Adam-based imitation training; deterministic for a fixed seed.

    Returns the trained parameters and the per-epoch mean loss curve.
    """
    if not dataset:
        raise ValueError("training needs a non-empty dataset")
    limits = limits or KinematicLimits()
    rng = np.random.default_rng(cfg.seed)
    params = init_params(
        rng,
        embed=cfg.embed,
        hidden=cfg.hidden,
        horizon_steps=cfg.horizon_steps,
    )
    opt = Adam(params, cfg.learning_rate)
    losses: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch_idx = order[lo : lo + cfg.batch_size]
            batch = [perturb_sample(dataset[i], cfg, rng) for i in batch_idx]
            grads, loss = gradient(params, batch, cfg, limits)
            opt.update(params, grads)
            epoch_loss += loss * len(batch)
        losses.append(epoch_loss / len(dataset))
    return params, losses


def predict_positions(
    params: PolicyParams,
    sample: TrainingSample,
    cfg: TrainingConfig,
    limits: KinematicLimits,
) -> np.ndarray:
    """Ego-frame predicted positions for steps 1..T."""
    from .network import forward

    elements = encode_scene(sample.frame, cfg.history_depth, dt=cfg.dt)
    ego = sample.frame.ego
    start = TrajState(0.0, 0.0, 0.0, v=ego.v, a=ego.a, k=ego.k, j=ego.j)
    traj, _ = forward(params, elements, start, limits, dt=cfg.dt)
    return traj.positions[1:]


def evaluate_ade(
    params: PolicyParams,
    samples: list[TrainingSample],
    horizons: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0),
    cfg: TrainingConfig | None = None,
    limits: KinematicLimits | None = None,
) -> dict[float, float]:
    """Mean displacement between predicted and target positions up to each
    horizon, averaged over samples."""
    cfg = cfg or TrainingConfig()
    limits = limits or KinematicLimits()
    if not samples:
        raise ValueError("evaluation needs samples")
    max_steps = int(round(max(horizons) / cfg.dt))
    if max_steps > cfg.horizon_steps:
        raise ValueError("requested horizon exceeds the planning horizon")
    errors = np.empty((len(samples), cfg.horizon_steps))
    for i, sample in enumerate(samples):
        pred = predict_positions(params, sample, cfg, limits)
        diff = pred - sample.targets[:, :2]
        errors[i] = np.hypot(diff[:, 0], diff[:, 1])
    out = {}
    for h in horizons:
        steps = int(round(h / cfg.dt))
        out[h] = float(errors[:, :steps].mean())
    return out


def samples_from_scenes(
    scenes: list[Scene],
    cfg: TrainingConfig | None = None,
    per_scene: int = 10,
) -> list[TrainingSample]:
    """Slice logged scenes into imitation samples at evenly spaced ticks."""
    cfg = cfg or TrainingConfig()
    samples = []
    for scene in scenes:
        horizon = cfg.horizon_steps
        last_start = scene.n_ticks - horizon
        if last_start <= cfg.history_depth:
            continue
        ticks = np.unique(
            np.linspace(cfg.history_depth, last_start, per_scene).round().astype(int)
        )
        for tick in ticks:
            frame = scene.frame_at(int(tick))
            future = scene.ego_states[tick + 1 : tick + 1 + horizon]
            targets = np.array(
                [to_ego_frame(s.pose, frame.ego.pose) for s in future]
            )
            samples.append(
                TrainingSample(
                    frame=frame,
                    targets=targets,
                    scene_id=scene.scene_id,
                    tick=int(tick),
                )
            )
    return samples
