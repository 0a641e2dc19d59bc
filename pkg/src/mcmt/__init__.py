"""Multi-camera multi-target tracking association engine.

Turns per-camera detections (with appearance embeddings) and camera
calibrations into globally consistent identity tracks, scores them with the
3D HOTA metric family, and ships a deterministic synthetic scene generator
for end-to-end verification.
"""

from .config import PipelineConfig
from .core import (
    BBox,
    Detection,
    GlobalTrack,
    GroundTruthRecord,
    InputError,
    InternalError,
    Observation,
    Tracklet,
    WorldPoint,
    cosine_similarity,
    iou,
    normalize_embedding,
    overlap_coefficient,
)
from .evaluation import EvalReport, compute_hota, loc_similarity, match_frame
from .geometry import (
    CameraCalibration,
    WorldTrajectory,
    build_trajectory,
    ground_point,
    trajectory_distance,
)
from .pipeline import PipelineResult, TrackRecord, run_tracking
from .synth import Scene, SceneConfig, export_scene, generate_scene

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CameraCalibration",
    "Detection",
    "EvalReport",
    "GlobalTrack",
    "GroundTruthRecord",
    "InputError",
    "InternalError",
    "Observation",
    "PipelineConfig",
    "PipelineResult",
    "Scene",
    "SceneConfig",
    "TrackRecord",
    "Tracklet",
    "WorldPoint",
    "WorldTrajectory",
    "build_trajectory",
    "compute_hota",
    "cosine_similarity",
    "export_scene",
    "generate_scene",
    "ground_point",
    "iou",
    "loc_similarity",
    "match_frame",
    "normalize_embedding",
    "overlap_coefficient",
    "run_tracking",
    "trajectory_distance",
]
