"""Pose estimation and bin picking for deformable objects, in simulation.

Modules: ``rotations`` (quaternions, geodesic metric), ``transforms``
(rigid transforms, frame tree, calibration chains), ``camera`` (pinhole
model, depth rendering, crops), ``descriptor`` (depth embedding and
augmentation), ``codebook`` (view-sphere dictionary and lookup), ``binsim``
(bin scenes, suction picking, placement) and ``harness`` (benchmarks).
"""

from .camera import CameraIntrinsics, CropRule, DepthImage, RgbImage, deproject, project, render_depth
from .codebook import PoseCodebook, ViewSampling, estimate_pose, lookup, sample_rotations
from .descriptor import AugmentationConfig, augment, embed
from .errors import BinposeError
from .objects import DeformableObject, Protrusion, chicken
from .rotations import UnitQuaternion, geodesic_distance, pose_loss
from .transforms import RigidTransform, TransformTree, calibrate_camera, canonical_goal, label_object_pose

__version__ = "0.1.0"

__all__ = [
    "AugmentationConfig", "BinposeError", "CameraIntrinsics", "CropRule", "DeformableObject", "DepthImage",
    "PoseCodebook", "Protrusion", "RgbImage", "RigidTransform", "TransformTree", "UnitQuaternion",
    "ViewSampling", "augment", "calibrate_camera", "canonical_goal", "chicken", "deproject", "embed",
    "estimate_pose", "geodesic_distance", "label_object_pose", "lookup", "pose_loss", "project",
    "render_depth", "sample_rotations",
]
