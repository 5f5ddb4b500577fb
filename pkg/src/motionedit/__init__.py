"""Text-conditioned motion editing engine.

Spatial body-part blending, on-the-fly edit-triplet synthesis, a
windowed diffusion sampler with coherence guidance, keypoint-to-pose
fitting, and evaluation metrics, plus a CLI and a JSON-over-HTTP
service for interactive use.
"""

from .blending import BlendSpec, BodyMask, blend, resample
from .canon import RigidTransform2D5, ScalingFactors, canonicalize, decanonicalize, fit_scaling, kabsch, stitch
from .cutmix import AnnotatedMotion, CutmixConfig, EditTriplet, MaskAnnotation, TripletStream
from .diffusion import (
    ConditionBundle,
    DiffusionSchedule,
    GuidanceConfig,
    ModelBundle,
    SamplerConfig,
    autoregressive_edit,
    sample_window,
)
from .errors import MotionEditError
from .motion import KeypointMotion, PoseMotion, forward_kinematics, validate
from .neural import Coordinator, Denoiser, NetConfig, TrainConfig
from .posefit import FitConfig, fit_pose
from .skeleton import Skeleton, default_skeleton, load_skeleton
from .training import prepare_window, train_coordinator, train_denoiser

__version__ = "0.1.0"

__all__ = [
    "AnnotatedMotion", "BlendSpec", "BodyMask", "ConditionBundle", "Coordinator",
    "CutmixConfig", "Denoiser", "DiffusionSchedule", "EditTriplet", "FitConfig",
    "GuidanceConfig", "KeypointMotion", "MaskAnnotation", "ModelBundle",
    "MotionEditError", "NetConfig", "PoseMotion", "RigidTransform2D5",
    "SamplerConfig", "ScalingFactors", "Skeleton", "TrainConfig", "TripletStream",
    "autoregressive_edit", "blend", "canonicalize", "decanonicalize",
    "default_skeleton", "fit_pose", "fit_scaling", "forward_kinematics", "kabsch",
    "load_skeleton", "prepare_window", "resample", "sample_window", "stitch",
    "train_coordinator", "train_denoiser", "validate", "__version__",
]
