"""2D rig meshes: silhouette extraction, quality triangulation, point
location and barycentric evaluation of the rest -> deformed warp.

The rig mesh is the piecewise-linear 2D deformation authored at a
keypoint view; eval_phi is the hot path, called per Gaussian per frame,
so location queries run through a uniform acceleration grid and every
public query has a batched form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .errors import DegenerateTriangle, EmptyMask, ValidationError
from .triangulate import points_in_polygons, polygon_signed_area, refine_polygons

BARY_TOL = 1e-9


@dataclass(frozen=True)
class TriangulationParams:
    """Quality bounds for the rig triangulation (pixel units)."""

    min_angle: float = 32.5
    max_area: float = 20.0
    mask_resolution: int = 400
    simplify_tolerance: float = 1.5

    def __post_init__(self):
        if not 0 < self.min_angle < 34:
            raise ValidationError("min_angle must be in (0, 34) degrees")
        if not self.max_area > 0:
            raise ValidationError("max_area must be positive")


def extract_silhouette(mask, simplify_tolerance=1.5):
    """Trace and simplify the boundary of a binary mask.

    Returns a list of closed polygons (K, 2) in (x, y) pixel coordinates;
    outer loops have positive signed area, holes negative.
    """
    mask = np.asarray(mask).astype(bool)
    if not mask.any():
        raise EmptyMask("mask has no foreground pixels")
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = mask
    contours = measure.find_contours(padded, 0.5)
    polygons = []
    for c in contours:
        simplified = measure.approximate_polygon(c, simplify_tolerance)
        # rows are (y, x) in the padded frame; drop the repeated endpoint
        if np.allclose(simplified[0], simplified[-1]):
            simplified = simplified[:-1]
        xy = simplified[:, ::-1] - 1.0
        xy[:, 0] = np.clip(xy[:, 0], 0, w - 1)
        xy[:, 1] = np.clip(xy[:, 1], 0, h - 1)
        keep = np.linalg.norm(xy - np.roll(xy, 1, axis=0), axis=1) > 1e-9
        xy = xy[keep]
        if len(xy) >= 3 and abs(polygon_signed_area(xy)) > 1e-6:
            polygons.append(xy)
    if not polygons:
        raise EmptyMask("no usable boundary loop found")

    # orient by nesting depth: outer loops positive, holes negative.  A
    # loop's own vertex is the depth probe; a centroid can fall inside a
    # sibling hole on non-convex shapes
    oriented = []
    for i, poly in enumerate(polygons):
        depth = 0
        for j, other in enumerate(polygons):
            if i != j and points_in_polygons(poly[:1], [other])[0]:
                depth += 1
        want_ccw = depth % 2 == 0
        if (polygon_signed_area(poly) > 0) != want_ccw:
            poly = poly[::-1]
        oriented.append(poly)
    return oriented


class RigMesh2D:
    """Quality triangulation of a silhouette, with a deformed copy.

    rest_vertices / deformed_vertices: (V, 2) pixel coordinates,
    faces: (F, 3).  Point location is grid-accelerated; the deformed
    snapshot is replaced wholesale via set_deformed.
    """

    def __init__(self, rest_vertices, faces, deformed_vertices=None,
                 boundary_edge_count=None):
        V = np.ascontiguousarray(rest_vertices, dtype=float)
        F = np.ascontiguousarray(faces, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 2 or F.ndim != 2 or F.shape[1] != 3:
            raise ValidationError("bad rig mesh shapes")
        if len(F) == 0:
            raise ValidationError("rig mesh has no faces")
        if F.min() < 0 or F.max() >= len(V):
            raise ValidationError("face index out of range")

        # orient all rest triangles to positive signed area
        e1 = V[F[:, 1]] - V[F[:, 0]]
        e2 = V[F[:, 2]] - V[F[:, 0]]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        flip = det < 0
        F[flip] = F[flip][:, [0, 2, 1]]
        det = np.abs(det)
        if np.any(det <= 2e-9):  # det = 2 * area
            raise ValidationError("rest triangle with non-positive area")

        self.rest_vertices = V
        self.faces = F
        self.boundary_edge_count = (
            np.zeros(len(F), dtype=int)
            if boundary_edge_count is None
            else np.asarray(boundary_edge_count, dtype=int)
        )
        self._check_manifold()

        # inverse rest edge matrices for barycentric evaluation
        E = np.stack(
            [V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]]], axis=2
        )  # (F, 2, 2), columns are edges
        self._E_inv = np.linalg.inv(E)
        self._build_grid()

        self.deformed_vertices = None
        self._dphi = None
        self.set_deformed(V.copy() if deformed_vertices is None else deformed_vertices)

    # -- construction helpers -------------------------------------------------

    def _check_manifold(self):
        F = self.faces
        edges = np.sort(
            np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1
        )
        keys = edges[:, 0].astype(np.int64) << 32 | edges[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if counts.max(initial=0) > 2:
            raise ValidationError("non-manifold edge (more than two faces)")
        boundary = uniq[counts == 1]
        bi = (boundary >> 32).astype(np.int64)
        bj = (boundary & 0xFFFFFFFF).astype(np.int64)
        deg = np.bincount(
            np.concatenate([bi, bj]), minlength=len(self.rest_vertices)
        )
        if np.any((deg != 0) & (deg != 2)):
            raise ValidationError("boundary is not a set of closed loops")

    def _build_grid(self):
        V, F = self.rest_vertices, self.faces
        tv = V[F]  # (F, 3, 2)
        edge_len = np.linalg.norm(
            tv - np.roll(tv, 1, axis=1), axis=2
        ).max(axis=1)
        cell = float(np.median(edge_len))
        lo = V.min(axis=0) - 1e-6
        hi = V.max(axis=0) + 1e-6
        nx = int(np.clip(np.ceil((hi[0] - lo[0]) / cell), 1, 512))
        ny = int(np.clip(np.ceil((hi[1] - lo[1]) / cell), 1, 512))
        sx = (hi[0] - lo[0]) / nx
        sy = (hi[1] - lo[1]) / ny

        fmin = tv.min(axis=1)
        fmax = tv.max(axis=1)
        cx0 = np.clip(((fmin[:, 0] - lo[0]) / sx).astype(int), 0, nx - 1)
        cx1 = np.clip(((fmax[:, 0] - lo[0]) / sx).astype(int), 0, nx - 1)
        cy0 = np.clip(((fmin[:, 1] - lo[1]) / sy).astype(int), 0, ny - 1)
        cy1 = np.clip(((fmax[:, 1] - lo[1]) / sy).astype(int), 0, ny - 1)
        cells = [[] for _ in range(nx * ny)]
        for f in range(len(F)):
            for gy in range(cy0[f], cy1[f] + 1):
                base = gy * nx
                for gx in range(cx0[f], cx1[f] + 1):
                    cells[base + gx].append(f)
        counts = np.array([len(c) for c in cells])
        self._grid_start = np.concatenate([[0], np.cumsum(counts)])
        self._grid_items = np.array(
            [f for c in cells for f in c], dtype=np.int64
        )
        self._grid_lo = lo
        self._grid_scale = np.array([sx, sy])
        self._grid_shape = (nx, ny)
        self._centroid_tree = cKDTree(tv.mean(axis=1))

    # -- deformation snapshot -------------------------------------------------

    def set_deformed(self, deformed_vertices):
        """Install a new deformed-vertex snapshot and its per-face Jacobians."""
        D = np.ascontiguousarray(deformed_vertices, dtype=float)
        if D.shape != self.rest_vertices.shape:
            raise ValidationError("deformed vertices must match rest vertices")
        F = self.faces
        E_def = np.stack(
            [D[F[:, 1]] - D[F[:, 0]], D[F[:, 2]] - D[F[:, 0]]], axis=2
        )
        self.deformed_vertices = D
        self._dphi = E_def @ self._E_inv  # constant per-triangle 2x2 Jacobian

    def with_deformed(self, deformed_vertices):
        """Copy of this rig sharing rest geometry, with new deformed vertices."""
        m = RigMesh2D.__new__(RigMesh2D)
        m.__dict__.update(self.__dict__)
        m.set_deformed(deformed_vertices)
        return m

    # -- queries --------------------------------------------------------------

    def _bary_pairs(self, q, faces):
        """Barycentrics of points q (P, 2) w.r.t. rest faces (P,)."""
        v0 = self.rest_vertices[self.faces[faces, 0]]
        E = self._E_inv[faces]
        d0 = q[:, 0] - v0[:, 0]
        d1 = q[:, 1] - v0[:, 1]
        # unrolled 2x2 solve: faster than batched matmul at this size
        lam = np.empty((len(q), 3))
        lam[:, 1] = E[:, 0, 0] * d0 + E[:, 0, 1] * d1
        lam[:, 2] = E[:, 1, 0] * d0 + E[:, 1, 1] * d1
        lam[:, 0] = 1.0 - lam[:, 1] - lam[:, 2]
        return lam

    def locate_batch(self, q):
        """Containing (or nearest) rest triangle per query point.

        q: (N, 2).  Returns (face (N,), bary (N, 3), inside (N,) bool).
        Ties on shared edges/vertices go to the lowest face index.
        """
        q = np.atleast_2d(np.asarray(q, dtype=float))
        n = len(q)
        nx, ny = self._grid_shape
        g = (q - self._grid_lo) / self._grid_scale
        gx = np.clip(g[:, 0].astype(int), 0, nx - 1)
        gy = np.clip(g[:, 1].astype(int), 0, ny - 1)
        in_bbox = (
            (g[:, 0] >= 0) & (g[:, 0] < nx) & (g[:, 1] >= 0) & (g[:, 1] < ny)
        )
        cell = gy * nx + gx
        start = self._grid_start[cell]
        stop = self._grid_start[cell + 1]
        counts = np.where(in_bbox, stop - start, 0)

        pt_idx = np.repeat(np.arange(n), counts)
        starts_cum = np.concatenate([[0], np.cumsum(counts[:-1])]) if n else np.empty(0, int)
        offs = np.arange(counts.sum()) - np.repeat(starts_cum, counts)
        pair_faces = self._grid_items[np.repeat(start, counts) + offs]

        face = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        if len(pt_idx):
            lam = self._bary_pairs(q[pt_idx], pair_faces)
            ok = lam.min(axis=1) >= -BARY_TOL
            # candidate lists are face-sorted within each cell, so the first
            # valid pair per point is the lowest containing face index
            pts_ok = pt_idx[ok]
            first_pts, first_at = np.unique(pts_ok, return_index=True)
            face[first_pts] = pair_faces[ok][first_at]
            bary[first_pts] = lam[ok][first_at]

        inside = face >= 0
        missing = np.flatnonzero(~inside)
        if len(missing):
            # outside points extend the nearest triangle's affine map:
            # unclamped barycentrics keep the identity warp an identity
            nf, _ = self._nearest_clamp(q[missing])
            face[missing] = nf
            bary[missing] = self._bary_pairs(q[missing], nf)
        return face, bary, inside

    def _nearest_clamp(self, q):
        """Closest rest triangle and its barycentrics for outside points.

        Candidates come from a KD-tree over face centroids; with the
        near-uniform triangle sizes of a quality mesh the true nearest
        face is within the closest couple dozen centroids.
        """
        V, F = self.rest_vertices, self.faces
        k = min(24, len(F))
        cand = self._centroid_tree.query(q, k=k)[1]
        cand = cand.reshape(len(q), k)
        d2, lam = _closest_point_triangles(q, V[F[cand]])
        rows = np.arange(len(q))
        j = d2.argmin(axis=1)
        return cand[rows, j], lam[rows, j]

    def locate(self, q):
        face, bary, inside = self.locate_batch(np.asarray(q, dtype=float)[None, :])
        return int(face[0]), bary[0], bool(inside[0])

    def eval_phi_batch(self, q):
        """Warp query points through the rest -> deformed map.

        Returns (positions (N, 2), Jacobians (N, 2, 2), inside (N,) bool).
        Outside points are clamped to the nearest triangle's linear map.
        """
        q = np.atleast_2d(np.asarray(q, dtype=float))
        face, bary, inside = self.locate_batch(q)
        tv = self.deformed_vertices[self.faces[face]]  # (N, 3, 2)
        pos = np.einsum("ni,nij->nj", bary, tv)
        if not np.all(np.isfinite(self._dphi[face])):
            raise DegenerateTriangle("singular rest edge matrix")
        return pos, self._dphi[face], inside

    def eval_phi(self, q):
        pos, jac, _ = self.eval_phi_batch(np.asarray(q, dtype=float)[None, :])
        return pos[0], jac[0]

    def as_phi(self):
        """Adapter matching the camera.lift_batch phi contract."""

        def phi(uv):
            pos, jac, _ = self.eval_phi_batch(uv)
            return pos, jac

        return phi


def _closest_point_triangles(Q, T):
    """Closest boundary points on per-point triangle sets.

    Q: (P, 2) points, T: (P, K, 3, 2) candidate triangles per point.
    Returns squared distances (P, K) and barycentrics of the closest
    point (P, K, 3).
    """
    P, K = T.shape[:2]
    a, b, c = T[:, :, 0], T[:, :, 1], T[:, :, 2]
    lam = np.zeros((P, K, 3))
    best = np.full((P, K), np.inf)

    def consider(d2, l):
        better = d2 < best
        np.copyto(best, d2, where=better)
        np.copyto(lam, l, where=better[:, :, None])

    for (p0, p1), (i0, i1) in (
        ((a, b), (0, 1)),
        ((b, c), (1, 2)),
        ((c, a), (2, 0)),
    ):
        e = p1 - p0  # (P, K, 2)
        w = Q[:, None, :] - p0
        ee = (e * e).sum(axis=2)
        t = np.clip((w * e).sum(axis=2) / np.maximum(ee, 1e-300), 0.0, 1.0)
        closest = p0 + t[:, :, None] * e
        d2 = ((Q[:, None, :] - closest) ** 2).sum(axis=2)
        l = np.zeros((P, K, 3))
        l[:, :, i0] = 1.0 - t
        l[:, :, i1] = t
        consider(d2, l)
    return best, lam


def triangulate(boundary, params: TriangulationParams = TriangulationParams()):
    """Quality-triangulate the interior of silhouette polygons.

    Every output triangle has area <= params.max_area, and a minimum
    angle >= params.min_angle unless it carries two constrained boundary
    edges (a small input angle).  deformed_vertices start equal to
    rest_vertices.
    """
    pts, tris, nb = refine_polygons(
        boundary, params.min_angle, params.max_area
    )
    return RigMesh2D(pts, tris, boundary_edge_count=nb)
