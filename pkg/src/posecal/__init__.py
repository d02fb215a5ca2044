"""Pose-guided non-rigid mesh calibration."""

__version__ = "0.1.0"

from .calibration import (
    CalibrationWeights,
    FitConfig,
    calibrate_mesh,
    fit_weights,
    init_weights,
    load_weights,
    loss_and_gradients,
    save_weights,
    vertex_predictions,
)
from .camera import Camera, PoseProjector, mesh_to_pose, project_weak_perspective
from .geometry import hat, rodrigues, rotation_between
from .mesh import Mesh, load_obj, save_obj
from .metrics import MetricReport, mpjpe, mpve, pa_mpjpe, procrustes_align
from .skeleton import H36M17, SMPL24, Pose2D, Pose3D, Skeleton, bone_vector, validate
from .transform import BoneTransform, PoseTransform, bone_transform, pose_transform, transform_point_on_bone
