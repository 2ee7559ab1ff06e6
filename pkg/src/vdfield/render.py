"""Verification-grade software renderer.

Masks feed silhouette extraction; previews are for eyeballing and
turntable sweeps.  Splats render as projected elliptical footprints
(projection-Jacobian covariance, back-to-front alpha compositing),
meshes as flat-shaded z-buffered triangles with a headlight.  Not
fidelity-matched to production splatters, and not meant to be.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image
from scipy import ndimage

from . import camera as cam
from .core import SplatModel, TriMeshModel, Viewpoint
from .defield import DeformationDocument
from .errors import NothingVisible, ValidationError
from .splats import deform_model

MASK_OPACITY_THRESHOLD = 0.3
MASK_SIGMA_EXTENT = 2.0
PREVIEW_SIGMA_EXTENT = 3.0


def _scaled_intrinsics(intr, resolution):
    if intr.width == resolution and intr.height == resolution:
        return intr
    sx = resolution / intr.width
    sy = resolution / intr.height
    from .core import CameraIntrinsics

    return CameraIntrinsics(
        intr.a_x * sx, intr.a_y * sy, intr.c_x * sx, intr.c_y * sy,
        resolution, resolution,
    )


def _project_splats(model, pose, intr):
    """Visible-splat projection: pixel centers, 2D covariances, depths."""
    p_cam = cam.to_camera(model.means, pose)
    z = p_cam[:, 2]
    vis = z > pose.z_near
    idx = np.flatnonzero(vis)
    if len(idx) == 0:
        return idx, None, None, None
    uv = cam.project(p_cam[idx], intr)
    Jp = cam.projection_jacobian(p_cam[idx], intr)
    cov2 = np.einsum("nij,njk,nlk->nil", Jp, model.covariances[idx], Jp)
    return idx, uv, cov2, z[idx]


def _ellipse_bounds(uv, cov2, extent, resolution):
    """Conservative per-splat pixel bounding boxes at the sigma extent."""
    rx = extent * np.sqrt(np.maximum(cov2[:, 0, 0], 1e-12))
    ry = extent * np.sqrt(np.maximum(cov2[:, 1, 1], 1e-12))
    rx = np.maximum(rx, 0.5)
    ry = np.maximum(ry, 0.5)
    x0 = np.clip(np.floor(uv[:, 0] - rx).astype(int), 0, resolution - 1)
    x1 = np.clip(np.ceil(uv[:, 0] + rx).astype(int), 0, resolution - 1)
    y0 = np.clip(np.floor(uv[:, 1] - ry).astype(int), 0, resolution - 1)
    y1 = np.clip(np.ceil(uv[:, 1] + ry).astype(int), 0, resolution - 1)
    return x0, x1, y0, y1


def _splat_footprint(uv, cov2, x0, x1, y0, y1, extent):
    """Mahalanobis-distance field over the bbox; None when empty/degenerate."""
    if x1 < x0 or y1 < y0:
        return None
    c = 0.5 * (cov2 + cov2.T) + 1e-8 * np.eye(2)
    try:
        cinv = np.linalg.inv(c)
    except np.linalg.LinAlgError:
        return None
    xs = np.arange(x0, x1 + 1) + 0.5 - uv[0]
    ys = np.arange(y0, y1 + 1) + 0.5 - uv[1]
    X, Y = np.meshgrid(xs, ys)
    md2 = cinv[0, 0] * X**2 + 2 * cinv[0, 1] * X * Y + cinv[1, 1] * Y**2
    return md2 <= extent**2, md2


def render_mask(model, pose, resolution=400):
    """Binary foreground mask of the model from a pose.

    Splats mark their projected 2-sigma ellipse when opacity >= 0.3;
    meshes rasterize with a z-buffer.  A 3x3 morphological closing seals
    pinholes.  Raises NothingVisible when no pixel is set.
    """
    intr = _scaled_intrinsics(pose.intrinsics, resolution)
    mask = np.zeros((resolution, resolution), dtype=bool)
    if isinstance(model, SplatModel):
        idx, uv, cov2, _ = _project_splats(model, pose, intr)
        for k in range(len(idx)):
            if model.opacities[idx[k]] < MASK_OPACITY_THRESHOLD:
                continue
            x0, x1, y0, y1 = (
                b[k] for b in _ellipse_bounds(uv, cov2, MASK_SIGMA_EXTENT, resolution)
            )
            fp = _splat_footprint(uv[k], cov2[k], x0, x1, y0, y1, MASK_SIGMA_EXTENT)
            if fp is not None:
                mask[y0 : y1 + 1, x0 : x1 + 1] |= fp[0]
    elif isinstance(model, TriMeshModel):
        depth, cover, _ = _rasterize_mesh(model, pose, intr, resolution)
        mask = cover
    else:
        raise TypeError(f"unsupported model type: {type(model).__name__}")

    mask = ndimage.binary_closing(mask, structure=np.ones((3, 3)))
    if not mask.any():
        raise NothingVisible("no pixel covered by the model")
    return mask


def _rasterize_mesh(model, pose, intr, resolution):
    """Z-buffer rasterization; returns (depth, coverage, face index map)."""
    depth = np.full((resolution, resolution), np.inf)
    faceidx = np.full((resolution, resolution), -1, dtype=np.int64)
    p_cam = cam.to_camera(model.vertices, pose)
    for f, face in enumerate(model.faces):
        tri = p_cam[face]
        if np.any(tri[:, 2] <= pose.z_near):
            continue  # clipping against the near plane is not needed here
        uv = cam.project(tri, intr)
        x0 = max(int(np.floor(uv[:, 0].min())), 0)
        x1 = min(int(np.ceil(uv[:, 0].max())), resolution - 1)
        y0 = max(int(np.floor(uv[:, 1].min())), 0)
        y1 = min(int(np.ceil(uv[:, 1].max())), resolution - 1)
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1) + 0.5
        ys = np.arange(y0, y1 + 1) + 0.5
        X, Y = np.meshgrid(xs, ys)
        d1 = uv[1] - uv[0]
        d2 = uv[2] - uv[0]
        det = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(det) < 1e-12:
            continue
        qx = X - uv[0, 0]
        qy = Y - uv[0, 1]
        l1 = (qx * d2[1] - qy * d2[0]) / det
        l2 = (qy * d1[0] - qx * d1[1]) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
        if not inside.any():
            continue
        # perspective-correct depth via interpolated 1/z
        zinv = l0 / tri[0, 2] + l1 / tri[1, 2] + l2 / tri[2, 2]
        z = np.where(inside, 1.0 / np.maximum(zinv, 1e-300), np.inf)
        sub = depth[y0 : y1 + 1, x0 : x1 + 1]
        closer = z < sub
        sub[closer] = z[closer]
        faceidx[y0 : y1 + 1, x0 : x1 + 1][closer] = f
    return depth, np.isfinite(depth), faceidx


def render_preview(model, pose, resolution=400, background=(0, 0, 0, 0)):
    """RGBA uint8 preview render of a model from a pose."""
    intr = _scaled_intrinsics(pose.intrinsics, resolution)
    rgba = np.zeros((resolution, resolution, 4))
    rgba[:, :] = np.asarray(background, dtype=float) / 255.0
    if isinstance(model, SplatModel):
        idx, uv, cov2, z = _project_splats(model, pose, intr)
        if len(idx) == 0:
            raise NothingVisible("model entirely behind camera")
        # back-to-front painter's order; ties broken by primitive index
        order = np.lexsort((idx, -z))
        x0a, x1a, y0a, y1a = _ellipse_bounds(
            uv, cov2, PREVIEW_SIGMA_EXTENT, resolution
        )
        for k in order:
            fp = _splat_footprint(
                uv[k], cov2[k], x0a[k], x1a[k], y0a[k], y1a[k], PREVIEW_SIGMA_EXTENT
            )
            if fp is None:
                continue
            inside, md2 = fp
            alpha = model.opacities[idx[k]] * np.exp(-0.5 * md2) * inside
            color = model.colors[idx[k]]
            sub = rgba[y0a[k] : y1a[k] + 1, x0a[k] : x1a[k] + 1]
            a = alpha[:, :, None]
            sub[:, :, :3] = a * color + (1 - a) * sub[:, :, :3]
            sub[:, :, 3] = alpha + (1 - alpha) * sub[:, :, 3]
    elif isinstance(model, TriMeshModel):
        depth, cover, faceidx = _rasterize_mesh(model, pose, intr, resolution)
        if not cover.any():
            raise NothingVisible("mesh entirely outside the view")
        normals = _face_normals(model)
        view_dir = pose.extrinsics.rotation[2]  # camera forward, world frame
        shade = np.abs(normals @ view_dir)  # headlight at the camera
        img = np.zeros((resolution, resolution))
        img[cover] = 0.15 + 0.85 * shade[faceidx[cover]]
        rgba[cover, :3] = img[cover][:, None]
        rgba[cover, 3] = 1.0
    else:
        raise TypeError(f"unsupported model type: {type(model).__name__}")
    return (np.clip(rgba, 0, 1) * 255).round().astype(np.uint8)


def _face_normals(model):
    V, F = model.vertices, model.faces
    n = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)


def render_turntable(model, doc: DeformationDocument, out_dir, frames=36,
                     polar=np.pi / 2, radius=None, target=None,
                     resolution=400, intrinsics=None):
    """Render an azimuth orbit sweep of the deformed model to PNGs.

    Returns the list of written file paths (zero-padded frame indices).
    """
    if frames < 2:
        raise ValidationError("turntable needs at least 2 frames")
    intr = intrinsics or doc.intrinsics
    if intr is None:
        raise ValidationError("no intrinsics available for the turntable")
    if radius is None or target is None:
        raise ValidationError("orbit radius and target are required")
    os.makedirs(out_dir, exist_ok=True)
    pad = max(4, len(str(frames - 1)))
    paths = []
    for i in range(frames):
        v = Viewpoint(2 * np.pi * i / frames, polar)
        pose = cam.pose_from_viewpoint(v, radius, target, intr)
        deformed = deform_model(model, doc, v)
        img = render_preview(deformed, pose, resolution)
        path = os.path.join(out_dir, f"frame_{i:0{pad}d}.png")
        write_png(img, path)
        paths.append(path)
    return paths


def write_png(rgba, path):
    Image.fromarray(rgba, mode="RGBA").save(path)


def read_png(path):
    return np.asarray(Image.open(path).convert("RGBA"))


def write_pgm(mask, path):
    """Binary mask as 8-bit PGM (foreground = 255)."""
    img = (np.asarray(mask, dtype=bool) * np.uint8(255))
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValidationError("only binary PGM (P5) is supported")
    parts = data.split(maxsplit=4)
    w, h = int(parts[1]), int(parts[2])
    body = parts[4][-w * h :] if len(parts[4]) > w * h else parts[4]
    return np.frombuffer(body, dtype=np.uint8, count=w * h).reshape(h, w) > 127
