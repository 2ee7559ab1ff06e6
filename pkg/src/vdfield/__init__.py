"""View-dependent deformation of Gaussian splats and triangle meshes.

Author 2D warps on a triangulated silhouette at chosen keypoint views,
lift them to depth-preserving 3D maps, and blend them compositionally
as the camera orbits, so each edit holds exactly at its keypoint view
and fades smoothly away from it.
"""

from .core import (
    CameraExtrinsics,
    CameraIntrinsics,
    Gaussian,
    Jacobian3,
    SplatModel,
    TriMeshModel,
    Viewpoint,
    wrap_angle_diff,
)
from .camera import CameraPose, lift_2d_deformation, pose_from_viewpoint, project, to_camera
from .defield import DeformationDocument, KeypointDeformation, basis, evaluate, evaluate_batch
from .mesh2d import RigMesh2D, TriangulationParams, extract_silhouette, triangulate
from .rigging import HandleSet, WeightMatrix, apply_skinning, solve_weights
from .splats import deform_gaussian, deform_model

__all__ = [
    "CameraExtrinsics", "CameraIntrinsics", "CameraPose", "DeformationDocument",
    "Gaussian", "HandleSet", "Jacobian3", "KeypointDeformation", "RigMesh2D",
    "SplatModel", "TriMeshModel", "TriangulationParams", "Viewpoint",
    "WeightMatrix", "apply_skinning", "basis", "deform_gaussian", "deform_model",
    "evaluate", "evaluate_batch", "extract_silhouette", "lift_2d_deformation",
    "pose_from_viewpoint", "project", "solve_weights", "to_camera", "triangulate",
]

__version__ = "0.1.0"
