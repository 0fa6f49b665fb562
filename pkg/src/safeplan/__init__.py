"""safeplan: an imitation-learned trajectory planner with a kinematic decoder,
wrapped by a rule-based fallback layer, evaluated in a deterministic
closed-loop simulator over synthetic scenes.
"""

from .geometry import (
    OrientedBox,
    Polyline,
    TrajState,
    Trajectory,
    boxes_intersect,
    footprint,
    project_to_polyline,
    to_ego_frame,
)
from .kinematics import ControlSequence, KinematicLimits, clip_controls, derive_profile, rollout, step
from .prediction import PredictionSet, predict
from .fallback import (
    Cause,
    FallbackConfig,
    FallbackDecision,
    FeasibilityLabel,
    ViolationReport,
    check_dynamics,
    select_trajectory,
)
from .world import AgentTrack, MapModel, Scene, SceneFrame
from .scenario import ScenarioConfig, generate_suite, load_scene, save_scene
from .simulator import SimConfig, SimReport, aggregate_report, detect_events, run_scene, run_suite

__version__ = "0.1.0"
