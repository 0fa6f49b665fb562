"""ML planner: vectorized scene encoding, a small encoder-attention-decoder
network emitting jerk/curvature controls decoded through the kinematic model,
imitation training with pose perturbations, and open-loop evaluation.
"""

from .features import ROW_DIM, ElementCaps, FeatureElement, encode_scene
from .network import (
    PolicyParams,
    forward,
    init_params,
    load_params,
    raw_controls,
    save_params,
)
from .training import (
    TrainingConfig,
    TrainingSample,
    evaluate_ade,
    gradient,
    imitation_loss,
    perturb_sample,
    samples_from_scenes,
    train,
)

__all__ = [
    "ROW_DIM",
    "ElementCaps",
    "FeatureElement",
    "encode_scene",
    "PolicyParams",
    "forward",
    "init_params",
    "load_params",
    "raw_controls",
    "save_params",
    "TrainingConfig",
    "TrainingSample",
    "evaluate_ade",
    "gradient",
    "imitation_loss",
    "perturb_sample",
    "samples_from_scenes",
    "train",
]
