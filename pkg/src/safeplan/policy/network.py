"""Planner network: a per-element row MLP with max-pooling, one scaled
dot-product attention layer queried by the ego embedding, and an MLP decoder
emitting per-step jerk and curvature, decoded through the kinematic model.

Forward and reverse passes are written out explicitly so the gradient is the
exact reverse-mode derivative of the loss, including the rollout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, fields

import numpy as np

from ..geometry import TrajState, Trajectory
from ..kinematics import (
    ControlSequence,
    KinematicLimits,
    clip_controls_arrays,
    rollout_arrays,
    trajectory_from_array,
)
from .features import ROW_DIM, FeatureElement

WEIGHTS_MAGIC = b"SPW1"
WEIGHTS_VERSION = 1


@dataclass(eq=False)
class PolicyParams:
    """All learnable arrays plus the shape metadata that fixes them."""

    enc_w1: np.ndarray
    enc_b1: np.ndarray
    enc_w2: np.ndarray
    enc_b2: np.ndarray
    att_wq: np.ndarray
    att_wk: np.ndarray
    att_wv: np.ndarray
    dec_w1: np.ndarray
    dec_b1: np.ndarray
    dec_w2: np.ndarray
    dec_b2: np.ndarray
    dec_w3: np.ndarray
    dec_b3: np.ndarray
    row_dim: int = ROW_DIM
    embed: int = 64
    hidden: int = 64
    horizon_steps: int = 40

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, np.ndarray):
                out[f.name] = val
        return out

    def check_shapes(self) -> None:
        d, e, h, t = self.row_dim, self.embed, self.hidden, self.horizon_steps
        expected = _shape_table(d, e, h, t)
        for name, arr in self.arrays().items():
            if arr.shape != expected[name]:
                raise ValueError(
                    f"{name} has shape {arr.shape}, expected {expected[name]}"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite weights")


def _shape_table(d: int, e: int, h: int, t: int) -> dict[str, tuple]:
    return {
        "enc_w1": (d, e),
        "enc_b1": (e,),
        "enc_w2": (e, e),
        "enc_b2": (e,),
        "att_wq": (e, e),
        "att_wk": (e, e),
        "att_wv": (e, e),
        "dec_w1": (2 * e, h),
        "dec_b1": (h,),
        "dec_w2": (h, h),
        "dec_b2": (h,),
        "dec_w3": (h, 2 * t),
        "dec_b3": (2 * t,),
    }


def init_params(
    rng: np.random.Generator,
    embed: int = 64,
    hidden: int = 64,
    horizon_steps: int = 40,
    row_dim: int = ROW_DIM,
    scale: float = 1.0,
    output_scale: float = 0.01,
) -> PolicyParams:
    """Fan-in-scaled normal initialization; biases start at zero.

    The final decoder layer starts near zero so initial raw controls sit
    inside the clip bounds, where the clip subgradient passes through.
    """
    shapes = _shape_table(row_dim, embed, hidden, horizon_steps)
    arrays = {}
    for name, shape in shapes.items():
        if name.endswith(("b1", "b2", "b3")):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = shape[0]
            arrays[name] = rng.normal(0.0, scale / math.sqrt(fan_in), size=shape)
    arrays["dec_w3"] *= output_scale
    return PolicyParams(
        **arrays, row_dim=row_dim, embed=embed, hidden=hidden, horizon_steps=horizon_steps
    )


def zero_grads(params: PolicyParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.arrays().items()}


def raw_controls(
    params: PolicyParams, elements: list[FeatureElement]
) -> tuple[np.ndarray, dict]:
    """Network forward pass; returns the raw (2T,) control vector and the
    cache needed for the reverse pass. Output layout: jerks then curvatures.
    """
    if not elements:
        raise ValueError("encoder produced no elements")
    embed = params.embed
    xs, h1s, h2s, arg_rows = [], [], [], []
    embs = np.empty((len(elements), embed))
    for i, el in enumerate(elements):
        x = el.rows
        if x.ndim != 2 or x.shape[1] != params.row_dim:
            raise ValueError(
                f"element {el.element_id!r} rows have width {x.shape}, "
                f"expected (*, {params.row_dim})"
            )
        z1 = x @ params.enc_w1 + params.enc_b1
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ params.enc_w2 + params.enc_b2
        h2 = np.maximum(z2, 0.0)
        arg = np.argmax(h2, axis=0)  # first max keeps the pass deterministic
        embs[i] = h2[arg, np.arange(embed)]
        xs.append(x)
        h1s.append(h1)
        h2s.append(h2)
        arg_rows.append(arg)

    ego = embs[0]
    q = ego @ params.att_wq
    keys = embs @ params.att_wk
    vals = embs @ params.att_wv
    scores = keys @ q / math.sqrt(embed)
    shifted = scores - scores.max()
    exp = np.exp(shifted)
    weights = exp / exp.sum()
    ctx = weights @ vals

    z = np.concatenate([ego, ctx])
    p1 = z @ params.dec_w1 + params.dec_b1
    d1 = np.maximum(p1, 0.0)
    p2 = d1 @ params.dec_w2 + params.dec_b2
    d2 = np.maximum(p2, 0.0)
    out = d2 @ params.dec_w3 + params.dec_b3

    cache = {
        "xs": xs,
        "h1s": h1s,
        "h2s": h2s,
        "arg_rows": arg_rows,
        "embs": embs,
        "q": q,
        "keys": keys,
        "vals": vals,
        "weights": weights,
        "ctx": ctx,
        "z": z,
        "d1": d1,
        "d2": d2,
        "p1": p1,
        "p2": p2,
    }
    return out, cache


def backward_controls(
    params: PolicyParams, cache: dict, dout: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact reverse pass of raw_controls for a (2T,) output gradient."""
    grads = zero_grads(params)
    embed = params.embed

    d2 = cache["d2"]
    d1 = cache["d1"]
    z = cache["z"]
    grads["dec_w3"] += np.outer(d2, dout)
    grads["dec_b3"] += dout
    gd2 = params.dec_w3 @ dout
    gp2 = gd2 * (cache["p2"] > 0.0)
    grads["dec_w2"] += np.outer(d1, gp2)
    grads["dec_b2"] += gp2
    gd1 = params.dec_w2 @ gp2
    gp1 = gd1 * (cache["p1"] > 0.0)
    grads["dec_w1"] += np.outer(z, gp1)
    grads["dec_b1"] += gp1
    gz = params.dec_w1 @ gp1
    g_ego = gz[:embed].copy()
    g_ctx = gz[embed:]

    weights = cache["weights"]
    vals = cache["vals"]
    keys = cache["keys"]
    q = cache["q"]
    embs = cache["embs"]
    g_weights = vals @ g_ctx
    g_vals = np.outer(weights, g_ctx)
    # softmax jacobian
    g_scores = weights * (g_weights - float(weights @ g_weights))
    g_keys = np.outer(g_scores, q) / math.sqrt(embed)
    g_q = (g_scores @ keys) / math.sqrt(embed)

    g_embs = g_vals @ params.att_wv.T + g_keys @ params.att_wk.T
    grads["att_wv"] += embs.T @ g_vals
    grads["att_wk"] += embs.T @ g_keys
    grads["att_wq"] += np.outer(embs[0], g_q)
    g_embs[0] += params.att_wq @ g_q
    g_embs[0] += g_ego

    cols = np.arange(embed)
    for i, x in enumerate(cache["xs"]):
        gh2 = np.zeros_like(cache["h2s"][i])
        gh2[cache["arg_rows"][i], cols] = g_embs[i]
        gz2 = gh2 * (cache["h2s"][i] > 0.0)
        grads["enc_w2"] += cache["h1s"][i].T @ gz2
        grads["enc_b2"] += gz2.sum(axis=0)
        gh1 = gz2 @ params.enc_w2.T
        gz1 = gh1 * (cache["h1s"][i] > 0.0)
        grads["enc_w1"] += x.T @ gz1
        grads["enc_b1"] += gz1.sum(axis=0)
    return grads


def split_controls(out: np.ndarray, horizon_steps: int) -> tuple[np.ndarray, np.ndarray]:
    if out.shape != (2 * horizon_steps,):
        raise ValueError(f"controls vector has shape {out.shape}, expected {(2 * horizon_steps,)}")
    return out[:horizon_steps], out[horizon_steps:]


def forward(
    params: PolicyParams,
    elements: list[FeatureElement],
    ego: TrajState,
    limits: KinematicLimits,
    dt: float = 0.1,
) -> tuple[Trajectory, ControlSequence]:
    """Full planner forward pass: network, control clipping, kinematic rollout.

    The returned trajectory is dynamically feasible with respect to `limits`
    by construction.
    """
    out, _ = raw_controls(params, elements)
    raw_j, raw_k = split_controls(out, params.horizon_steps)
    jerks, curvatures, _, _ = clip_controls_arrays(raw_j, raw_k, ego, limits, dt)
    arr = rollout_arrays(ego, jerks, curvatures, dt)
    traj = trajectory_from_array(arr, dt)
    return traj, ControlSequence(jerks=jerks, curvatures=curvatures, dt=dt)


def save_params(params: PolicyParams, path) -> None:
    """Flat little-endian binary: magic, version, shape table, then row-major
    float64 arrays in table order."""
    params.check_shapes()
    arrays = params.arrays()
    meta = np.array(
        [params.row_dim, params.embed, params.hidden, params.horizon_steps], dtype=float
    )
    entries = [("_meta", meta)] + list(arrays.items())
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", WEIGHTS_VERSION))
        fh.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> PolicyParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != WEIGHTS_MAGIC:
            raise ValueError(f"not a policy weights file (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != WEIGHTS_VERSION:
            raise ValueError(f"unsupported weights version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        shapes = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            shapes.append((name, dims))
        arrays = {}
        for name, dims in shapes:
            n = int(np.prod(dims)) if dims else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"truncated weights file while reading {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(dims).copy()
    if "_meta" not in arrays:
        raise ValueError("weights file is missing the shape metadata entry")
    row_dim, embed, hidden, horizon_steps = (int(v) for v in arrays.pop("_meta"))
    params = PolicyParams(
        **arrays, row_dim=row_dim, embed=embed, hidden=hidden, horizon_steps=horizon_steps
    )
    params.check_shapes()
    return params
