"""Shared geometric and model value types.

Everything here is a plain immutable-by-convention container over numpy
arrays, plus the angle arithmetic used by the view basis functions.  No
algorithms live in this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap an angle (scalar or array) into [0, 2*pi)."""
    return np.asarray(a, dtype=float) % TWO_PI


def wrap_angle_diff(a, b):
    """Signed minimal angular difference a - b, wrapped into (-pi, pi].

    Works elementwise on arrays.  This is the periodic subtraction used
    when comparing view angles.
    """
    d = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % TWO_PI
    d = np.where(d > np.pi, d - TWO_PI, d)
    if d.ndim == 0:
        return float(d)
    return d


@dataclass(frozen=True)
class Viewpoint:
    """Camera direction on the orbit sphere, spherical coordinates.

    azimuth is stored wrapped into [0, 2*pi); polar is clamped to [0, pi]
    (0 = straight above the orbit target, pi = straight below).
    """

    azimuth: float
    polar: float

    def __post_init__(self):
        az = float(self.azimuth)
        pol = float(self.polar)
        if not (np.isfinite(az) and np.isfinite(pol)):
            raise ValidationError("viewpoint angles must be finite")
        object.__setattr__(self, "azimuth", float(wrap_angle(az)))
        object.__setattr__(self, "polar", float(np.clip(pol, 0.0, np.pi)))

    def direction(self):
        """Unit vector from the orbit target toward the camera (world +Y up)."""
        st = np.sin(self.polar)
        return np.array(
            [np.cos(self.azimuth) * st, np.cos(self.polar), np.sin(self.azimuth) * st]
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    a_x: float
    a_y: float
    c_x: float
    c_y: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.a_x > 0 and self.a_y > 0):
            raise ValidationError("focal scales must be positive")
        if not (0 <= self.c_x <= self.width and 0 <= self.c_y <= self.height):
            raise ValidationError("principal point must lie inside the image")

    @property
    def matrix(self):
        return np.array(
            [[self.a_x, 0.0, self.c_x], [0.0, self.a_y, self.c_y], [0.0, 0.0, 1.0]]
        )


ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraExtrinsics:
    """World-to-camera rigid transform: p_cam = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValidationError("extrinsics must be a 3x3 rotation and 3-vector")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
            raise ValidationError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValidationError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class Gaussian:
    """One 3D Gaussian primitive: mean, covariance, opacity, RGB color."""

    mean: np.ndarray
    covariance: np.ndarray
    opacity: float = 1.0
    color: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        col = np.asarray(self.color, dtype=float)
        if mu.shape != (3,) or cov.shape != (3, 3) or col.shape != (3,):
            raise ValidationError("gaussian fields have wrong shapes")
        if np.max(np.abs(cov - cov.T)) > 1e-9:
            raise ValidationError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))) < -1e-9:
            raise ValidationError("covariance must be positive semi-definite")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValidationError("opacity must be in [0, 1]")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))
        object.__setattr__(self, "color", col)


class SplatModel:
    """A Gaussian-splat model stored as contiguous per-field arrays.

    means: (N, 3), covariances: (N, 3, 3), opacities: (N,), colors: (N, 3).
    The array layout keeps per-frame deformation of 1e5..1e6 Gaussians
    vectorizable; `Gaussian` objects are only materialized on demand.
    """

    def __init__(self, means, covariances, opacities=None, colors=None):
        means = np.ascontiguousarray(means, dtype=float)
        covariances = np.ascontiguousarray(covariances, dtype=float)
        n = len(means)
        if n == 0:
            raise ValidationError("splat model must be non-empty")
        if means.shape != (n, 3) or covariances.shape != (n, 3, 3):
            raise ValidationError("splat arrays have wrong shapes")
        if opacities is None:
            opacities = np.ones(n)
        if colors is None:
            colors = np.ones((n, 3))
        self.means = means
        self.covariances = covariances
        self.opacities = np.ascontiguousarray(opacities, dtype=float)
        self.colors = np.ascontiguousarray(colors, dtype=float)
        if self.opacities.shape != (n,) or self.colors.shape != (n, 3):
            raise ValidationError("opacity/color arrays have wrong shapes")

    def __len__(self):
        return len(self.means)

    def gaussian(self, i):
        return Gaussian(
            self.means[i], self.covariances[i], float(self.opacities[i]), self.colors[i]
        )

    @classmethod
    def from_gaussians(cls, gaussians):
        gaussians = list(gaussians)
        return cls(
            np.array([g.mean for g in gaussians]),
            np.array([g.covariance for g in gaussians]),
            np.array([g.opacity for g in gaussians]),
            np.array([g.color for g in gaussians]),
        )


class TriMeshModel:
    """Triangle mesh: vertices (N, 3) float, faces (M, 3) int."""

    def __init__(self, vertices, faces):
        V = np.ascontiguousarray(vertices, dtype=float)
        F = np.ascontiguousarray(faces, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 3:
            raise ValidationError("vertices must be (N, 3)")
        if F.ndim != 2 or F.shape[1] != 3:
            raise ValidationError("faces must be (M, 3)")
        if len(F) and (F.min() < 0 or F.max() >= len(V)):
            raise ValidationError("face index out of range")
        if len(F):
            degen = (F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])
            if degen.any():
                raise ValidationError(
                    f"degenerate face at index {int(np.flatnonzero(degen)[0])}"
                )
        self.vertices = V
        self.faces = F

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True)
class Jacobian3:
    """3x3 derivative of the deformation field at a point."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValidationError("jacobian must be 3x3")
        if not np.all(np.isfinite(m)):
            raise ValidationError("jacobian entries must be finite")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))
