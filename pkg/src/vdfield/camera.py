"""Orbit camera model: world<->camera transforms, perspective projection,
and lifting of 2D image-plane warps to depth-preserving 3D maps with
analytic Jacobians.

Conventions (the same everywhere in the package):
  - right-handed camera frame, camera looks down +z,
  - pixel x grows right, pixel y grows downward,
  - world up is +Y; the orbit camera swaps to +Z up when looking
    straight along +-Y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CameraExtrinsics, CameraIntrinsics, Viewpoint
from .errors import DepthTooSmall, ValidationError

# Points closer to the camera plane than this fraction of the orbit
# radius are rejected: the projection is singular at z = 0.
Z_NEAR_FRACTION = 1e-4


@dataclass(frozen=True)
class CameraPose:
    """Intrinsics + extrinsics, bound to the orbit position that made them."""

    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    viewpoint: Viewpoint
    orbit_radius: float
    orbit_target: np.ndarray

    def __post_init__(self):
        if not self.orbit_radius > 0:
            raise ValidationError("orbit radius must be positive")
        object.__setattr__(
            self, "orbit_target", np.asarray(self.orbit_target, dtype=float)
        )

    @property
    def z_near(self):
        return Z_NEAR_FRACTION * self.orbit_radius

    @property
    def center(self):
        """Camera center in world coordinates."""
        E = self.extrinsics
        return -E.rotation.T @ E.translation


def pose_from_viewpoint(v: Viewpoint, radius, target, intr: CameraIntrinsics):
    """Place the camera on the orbit sphere, looking at the target.

    The camera sits at target + radius * direction(v).  World +Y is used
    as the up reference; +Z replaces it when the view direction is
    within 1e-6 of vertical.
    """
    if not radius > 0:
        raise ValidationError("orbit radius must be positive")
    target = np.asarray(target, dtype=float)
    d = v.direction()
    center = target + radius * d
    forward = -d  # camera looks at the target
    up = np.array([0.0, 1.0, 0.0])
    if abs(forward @ up) > 1.0 - 1e-6:
        up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.vstack([right, down, forward])
    # orthonormalize against round-off so extrinsics validation at 1e-9 holds
    u_svd, _, vt = np.linalg.svd(R)
    R = u_svd @ vt
    t = -R @ center
    return CameraPose(intr, CameraExtrinsics(R, t), v, float(radius), target)


def to_camera(p, pose: CameraPose):
    """World -> camera frame, R p + t.  Accepts (3,) or (N, 3)."""
    E = pose.extrinsics
    p = np.asarray(p, dtype=float)
    return p @ E.rotation.T + E.translation


def from_camera(p_cam, pose: CameraPose):
    """Camera -> world frame, inverse of to_camera."""
    E = pose.extrinsics
    p_cam = np.asarray(p_cam, dtype=float)
    return (p_cam - E.translation) @ E.rotation


def project(p_cam, intr: CameraIntrinsics, z_near=1e-12):
    """Perspective projection of camera-frame points to pixels.

    Accepts (3,) or (N, 3); raises DepthTooSmall if any depth <= z_near.
    """
    p_cam = np.asarray(p_cam, dtype=float)
    single = p_cam.ndim == 1
    P = np.atleast_2d(p_cam)
    z = P[:, 2]
    if np.any(z <= z_near):
        raise DepthTooSmall(f"point depth {z.min():.3e} <= z_near {z_near:.3e}")
    uv = np.empty((len(P), 2))
    uv[:, 0] = intr.a_x * P[:, 0] / z + intr.c_x
    uv[:, 1] = intr.a_y * P[:, 1] / z + intr.c_y
    return uv[0] if single else uv


def projection_jacobian(p_cam, intr: CameraIntrinsics):
    """d(pixel)/d(camera point): (N, 2, 3) for camera-frame points (N, 3)."""
    P = np.atleast_2d(np.asarray(p_cam, dtype=float))
    z = P[:, 2]
    J = np.zeros((len(P), 2, 3))
    J[:, 0, 0] = intr.a_x / z
    J[:, 0, 2] = -intr.a_x * P[:, 0] / z**2
    J[:, 1, 1] = intr.a_y / z
    J[:, 1, 2] = -intr.a_y * P[:, 1] / z**2
    return J


def lift_batch(p_world, pose: CameraPose, phi):
    """Lift a 2D pixel-plane warp to a depth-preserving 3D map, batched.

    phi maps pixel points (N, 2) -> (positions (N, 2), jacobians (N, 2, 2)).
    Returns (deformed world points (N, 3), world Jacobians (N, 3, 3)).
    Raises DepthTooSmall if any point is at or behind the near plane.
    """
    intr = pose.intrinsics
    R = pose.extrinsics.rotation
    P = np.atleast_2d(np.asarray(p_world, dtype=float))
    p_cam = to_camera(P, pose)
    z = p_cam[:, 2]
    if np.any(z <= pose.z_near):
        raise DepthTooSmall(
            f"point depth {z.min():.3e} <= z_near {pose.z_near:.3e}"
        )

    uv = project(p_cam, intr)
    uv_new, dphi = phi(uv)

    # back-projection at preserved depth
    q_cam = np.empty_like(p_cam)
    q_cam[:, 0] = (uv_new[:, 0] - intr.c_x) * z / intr.a_x
    q_cam[:, 1] = (uv_new[:, 1] - intr.c_y) * z / intr.a_y
    q_cam[:, 2] = z

    # chain rule in the camera frame:
    #   uv = pi(p_cam), q_xy = (phi(uv) - c) * z / a, q_z = z
    dpi = projection_jacobian(p_cam, intr)  # (N, 2, 3)
    dphi_dp = dphi @ dpi  # (N, 2, 3)
    A = np.zeros((len(P), 3, 3))
    A[:, 0, :] = dphi_dp[:, 0, :] * (z / intr.a_x)[:, None]
    A[:, 1, :] = dphi_dp[:, 1, :] * (z / intr.a_y)[:, None]
    A[:, 0, 2] += (uv_new[:, 0] - intr.c_x) / intr.a_x
    A[:, 1, 2] += (uv_new[:, 1] - intr.c_y) / intr.a_y
    A[:, 2, 2] = 1.0

    q_world = from_camera(q_cam, pose)
    J_world = R.T @ A @ R  # broadcast over the batch
    return q_world, J_world


def lift_2d_deformation(p_world, pose: CameraPose, phi):
    """Single-point lift; see lift_batch for the phi contract."""
    q, J = lift_batch(np.asarray(p_world, dtype=float)[None, :], pose, phi)
    return q[0], J[0]
