"""The view-dependent deformation field.

Each authored keypoint carries a 2D rig warp, a camera pose, and a
Gaussian falloff over wrapped view-angle distance.  Evaluation runs the
compositional recursion: layer k blends its lifted 3D warp of the
previous result with the previous result, weighted by the layer's basis
value, and propagates Jacobians alongside.  A linear weighted-average
mode exists for comparison, and an optional depth cut restricts a layer
to points beyond a camera-frame z threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import camera as cam
from .core import CameraIntrinsics, Viewpoint, wrap_angle_diff
from .errors import DepthTooSmall, ValidationError
from .mesh2d import RigMesh2D
from .rigging import HandleSet


@dataclass(frozen=True)
class KeypointDeformation:
    """One authored layer: where it was authored, its 2D warp, and how
    fast it fades as the view leaves the keypoint."""

    viewpoint: Viewpoint
    pose: cam.CameraPose
    rig: RigMesh2D
    handles: Optional[HandleSet]
    sigma_azimuth: float = 4.0
    sigma_polar: float = 4.0
    depth_cut: Optional[float] = None

    def __post_init__(self):
        if self.pose.viewpoint != self.viewpoint:
            raise ValidationError("pose was not generated from this viewpoint")
        if self.sigma_azimuth < 0 or self.sigma_polar < 0:
            raise ValidationError("falloff widths must be non-negative")
        if self.handles is not None:
            self.handles.validate_against(self.rig)


@dataclass(frozen=True)
class DeformationDocument:
    """Ordered layer list plus global camera intrinsics.

    Layer order is authoring order and is semantically meaningful in
    compositional mode.
    """

    keypoints: tuple = ()
    intrinsics: Optional[CameraIntrinsics] = None
    blend_mode: str = "compositional"
    base_case_mode: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "keypoints", tuple(self.keypoints))
        if self.blend_mode not in ("compositional", "linear"):
            raise ValidationError(f"unknown blend_mode: {self.blend_mode}")
        if self.base_case_mode not in ("uniform", "paper_literal"):
            raise ValidationError(f"unknown base_case_mode: {self.base_case_mode}")

    def with_keypoints(self, keypoints):
        return replace(self, keypoints=tuple(keypoints))


@dataclass
class EvalDiagnostics:
    """Per-evaluation counters for layers skipped on lift failure."""

    skipped: int = 0
    per_layer: dict = field(default_factory=dict)

    def record(self, layer, count):
        if count:
            self.skipped += int(count)
            self.per_layer[layer] = self.per_layer.get(layer, 0) + int(count)


def basis(k: KeypointDeformation, v: Viewpoint):
    """Gaussian falloff over wrapped angular distance; 1 at the keypoint."""
    da = wrap_angle_diff(v.azimuth, k.viewpoint.azimuth)
    dp = wrap_angle_diff(v.polar, k.viewpoint.polar)
    return float(np.exp(-k.sigma_azimuth * da**2 - k.sigma_polar * dp**2))


def _lift_layer_batch(k: KeypointDeformation, P):
    """Lifted warp of one layer over points (N, 3).

    Returns (positions, jacobians, failed mask).  Points in front of a
    set depth cut, or behind the camera, pass through unchanged; the
    latter are reported in the failed mask.
    """
    n = len(P)
    q = P.copy()
    J = np.tile(np.eye(3), (n, 1, 1))
    failed = np.zeros(n, dtype=bool)

    z = cam.to_camera(P, k.pose)[:, 2]
    active = z > k.pose.z_near
    failed = ~active
    if k.depth_cut is not None:
        active = active & (z >= k.depth_cut)
    idx = np.flatnonzero(active)
    if len(idx):
        q[idx], J[idx] = cam.lift_batch(P[idx], k.pose, k.rig.as_phi())
    return q, J, failed


def evaluate_batch(doc: DeformationDocument, P, v: Viewpoint, diagnostics=None):
    """Evaluate the field over points (N, 3) at view v.

    Returns (deformed points (N, 3), Jacobians (N, 3, 3)).  A layer that
    cannot lift a point (behind its camera) is skipped for that point and
    counted in diagnostics.
    """
    P = np.ascontiguousarray(np.atleast_2d(P), dtype=float)
    n = len(P)
    J_out = np.tile(np.eye(3), (n, 1, 1))
    if not doc.keypoints:
        return P.copy(), J_out

    if doc.blend_mode == "linear":
        return _evaluate_linear(doc, P, v, diagnostics)

    P_cur = P.copy()
    J_cur = J_out
    for i, k in enumerate(doc.keypoints):
        beta = basis(k, v)
        if i == 0 and doc.base_case_mode == "paper_literal":
            beta = 1.0  # literal base case: layer 1 always applies at full strength
        if beta == 0.0:
            continue
        q, J_l, failed = _lift_layer_batch(k, P_cur)
        if diagnostics is not None:
            diagnostics.record(i, failed.sum())
        P_new = beta * q + (1.0 - beta) * P_cur
        J_new = beta * (J_l @ J_cur) + (1.0 - beta) * J_cur
        # failed points keep the previous layer's state (beta = 0 there)
        P_new[failed] = P_cur[failed]
        J_new[failed] = J_cur[failed]
        P_cur, J_cur = P_new, J_new
    return P_cur, J_cur


def _evaluate_linear(doc, P, v, diagnostics=None):
    """Comparison mode: normalized weighted average of per-layer offsets,
    all evaluated at the undeformed points (order-independent)."""
    n = len(P)
    betas = np.array([basis(k, v) for k in doc.keypoints])
    norm = max(1.0, betas.sum())
    offsets = np.zeros((n, 3))
    J_sum = np.zeros((n, 3, 3))
    for i, k in enumerate(doc.keypoints):
        b = betas[i] / norm
        if b == 0.0:
            continue
        q, J_l, failed = _lift_layer_batch(k, P)
        if diagnostics is not None:
            diagnostics.record(i, failed.sum())
        q[failed] = P[failed]
        J_l[failed] = np.eye(3)
        offsets += b * (q - P)
        J_sum += b * (J_l - np.eye(3))
    return P + offsets, np.tile(np.eye(3), (n, 1, 1)) + J_sum


def evaluate(doc: DeformationDocument, p, v: Viewpoint, diagnostics=None):
    """Single-point field evaluation: (deformed point (3,), Jacobian (3, 3))."""
    q, J = evaluate_batch(doc, np.asarray(p, dtype=float)[None, :], v, diagnostics)
    return q[0], J[0]


def lift_keypoint(k: KeypointDeformation, p):
    """Lift one layer at one point.  Points before a set depth cut pass
    through with identity Jacobian; behind-camera points raise."""
    P = np.asarray(p, dtype=float)[None, :]
    z = cam.to_camera(P, k.pose)[0, 2]
    if z <= k.pose.z_near:
        raise DepthTooSmall(f"point depth {z:.3e} <= z_near {k.pose.z_near:.3e}")
    q, J, _ = _lift_layer_batch(k, P)
    return q[0], J[0]
