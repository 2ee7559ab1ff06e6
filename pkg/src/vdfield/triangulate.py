"""Constrained quality triangulation of polygonal regions.

Delaunay triangulation comes from scipy (Qhull); constrained boundary
edges are recovered by midpoint subdivision, and triangle quality (a
minimum-angle bound plus a maximum-area bound) is reached by inserting
circumcenters of bad triangles in batched refinement passes, splitting
encroached boundary subsegments instead of inserting points that would
land outside the domain.

Skinny triangles carrying two constrained edges (a small input angle of
the boundary polygon) are exempt from the angle bound; they cannot be
improved without corrupting the boundary.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import RefinementDiverged, ValidationError


def polygon_signed_area(poly):
    """Signed area of a closed polygon (positive = CCW in x-right/y-up)."""
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    x2, y2 = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * y2 - x2 * y))


def points_in_polygons(points, polygons):
    """Even-odd (crossing number) containment test against a polygon set.

    Returns a boolean array; holes fall out of the even-odd rule
    automatically.
    """
    pts = np.asarray(points, dtype=float)
    a_list, b_list = [], []
    for poly in polygons:
        p = np.asarray(poly, dtype=float)
        a_list.append(p)
        b_list.append(np.roll(p, -1, axis=0))
    A = np.concatenate(a_list)
    B = np.concatenate(b_list)
    inside = np.zeros(len(pts), dtype=bool)
    chunk = max(1, 4_000_000 // max(len(A), 1))
    for s in range(0, len(pts), chunk):
        P = pts[s : s + chunk]
        px = P[:, 0][:, None]
        py = P[:, 1][:, None]
        ay, by = A[:, 1][None, :], B[:, 1][None, :]
        ax, bx = A[:, 0][None, :], B[:, 0][None, :]
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = ax + (py - ay) * (bx - ax) / (by - ay)
        crossing = straddle & (px < x_at)
        inside[s : s + chunk] = (crossing.sum(axis=1) % 2).astype(bool)
    return inside


def triangle_min_angles(points, tris):
    """Smallest interior angle (radians) of each triangle."""
    p0 = points[tris[:, 0]]
    p1 = points[tris[:, 1]]
    p2 = points[tris[:, 2]]
    a = np.linalg.norm(p1 - p2, axis=1)  # opposite vertex 0
    b = np.linalg.norm(p0 - p2, axis=1)
    c = np.linalg.norm(p0 - p1, axis=1)
    angles = np.empty((len(tris), 3))
    with np.errstate(invalid="ignore"):
        angles[:, 0] = np.arccos(np.clip((b**2 + c**2 - a**2) / (2 * b * c), -1, 1))
        angles[:, 1] = np.arccos(np.clip((a**2 + c**2 - b**2) / (2 * a * c), -1, 1))
        angles[:, 2] = np.arccos(np.clip((a**2 + b**2 - c**2) / (2 * a * b), -1, 1))
    return np.nan_to_num(angles, nan=0.0).min(axis=1)


def triangle_areas(points, tris):
    p0 = points[tris[:, 0]]
    e1 = points[tris[:, 1]] - p0
    e2 = points[tris[:, 2]] - p0
    return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def circumcenters(points, tris):
    """Circumcenters and circumradii of triangles, vectorized."""
    p0 = points[tris[:, 0]]
    p1 = points[tris[:, 1]]
    p2 = points[tris[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    n1 = (d1**2).sum(axis=1)
    n2 = (d2**2).sum(axis=1)
    det = 2.0 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    det = np.where(np.abs(det) < 1e-300, np.nan, det)
    ux = (d2[:, 1] * n1 - d1[:, 1] * n2) / det
    uy = (d1[:, 0] * n2 - d2[:, 0] * n1) / det
    cc = p0 + np.stack([ux, uy], axis=1)
    r = np.linalg.norm(cc - p0, axis=1)
    return cc, r


def _edge_key(i, j):
    lo = np.minimum(i, j).astype(np.int64)
    hi = np.maximum(i, j).astype(np.int64)
    return lo << 32 | hi


def _resample_boundary(polygons, spacing):
    """Resample polygon loops at roughly uniform spacing, keeping every
    input corner.  Returns (points (B, 2), segment index pairs)."""
    pts = []
    segs = []
    for poly in polygons:
        loop_start = len(pts)
        loop_idx = []
        n = len(poly)
        for k in range(n):
            a = poly[k]
            b = poly[(k + 1) % n]
            length = float(np.linalg.norm(b - a))
            pieces = max(1, int(np.ceil(length / spacing)))
            loop_idx.append(len(pts))
            pts.append(a)
            for t in range(1, pieces):
                loop_idx.append(len(pts))
                pts.append(a + (b - a) * (t / pieces))
        m = len(pts) - loop_start
        for k in range(m):
            segs.append((loop_start + k, loop_start + (k + 1) % m))
    return np.asarray(pts, dtype=float), segs


def _hex_lattice(lo, hi, spacing):
    """Hexagonal lattice points covering a bounding box."""
    dy = spacing * np.sqrt(3.0) / 2.0
    ys = np.arange(lo[1], hi[1] + dy, dy)
    rows = []
    for r, y in enumerate(ys):
        off = 0.5 * spacing if r % 2 else 0.0
        xs = np.arange(lo[0] + off, hi[0] + spacing, spacing)
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
    if not rows:
        return np.empty((0, 2))
    return np.concatenate(rows)


def _inside_triangles(points, simplices, polygons):
    centroids = points[simplices].mean(axis=1)
    inside = points_in_polygons(centroids, polygons)
    # collinear resampled boundary points produce zero-area slivers lying
    # exactly on the boundary; they are measure-zero and get dropped
    inside &= triangle_areas(points, simplices) > 1e-9
    return inside


def refine_polygons(polygons, min_angle_deg, max_area, budget_factor=50):
    """Triangulate the interior of a polygon set with quality bounds.

    polygons: list of closed loops (K, 2); the even-odd rule defines the
    interior, so holes are just loops inside loops.

    Strategy: resample the boundary and seed the interior with a hex
    lattice sized just under the area bound, relax interior vertices
    toward centroidal positions (Lloyd iterations over rebuilt Delaunay
    triangulations), then clean up stragglers with conservatively spaced
    circumcenter insertions.  Returns (points (N, 2), triangles (M, 3),
    boundary_edge_count (M,)).
    """
    polygons = [np.asarray(p, dtype=float) for p in polygons]
    for p in polygons:
        if len(p) < 3:
            raise ValidationError("polygon needs at least 3 vertices")

    if len(polygons) == 1 and len(polygons[0]) == 3:
        # an already-conforming triangle passes through untouched
        tri = np.array([[0, 1, 2]])
        if (
            triangle_areas(polygons[0], tri)[0] <= max_area
            and triangle_min_angles(polygons[0], tri)[0]
            >= np.deg2rad(min_angle_deg)
        ):
            return polygons[0].copy(), tri, np.array([3])

    n_input = sum(len(p) for p in polygons)
    domain_area = abs(sum(polygon_signed_area(p) for p in polygons))
    # the area bound dictates ~2 vertices per max_area of interior; the
    # budget guards pathology, not legitimate area-driven refinement
    budget = max(budget_factor * n_input, int(6 * domain_area / max_area), 2000)
    min_angle = np.deg2rad(min_angle_deg)
    # edge of an equilateral triangle at 70% of the area bound: leaves
    # headroom so relaxation jitter stays under max_area
    h = float(np.sqrt(4.0 * 0.7 * max_area / np.sqrt(3.0)))

    bpts, segs = _resample_boundary(polygons, h)
    lo = bpts.min(axis=0)
    hi = bpts.max(axis=0)
    lattice = _hex_lattice(lo, hi, h)
    if len(lattice):
        keep = points_in_polygons(lattice, polygons)
        lattice = lattice[keep]
    if len(lattice):
        tree = cKDTree(bpts)
        near = tree.query(lattice, k=1)[0]
        lattice = lattice[near > 0.7 * h]

    pts = np.concatenate([bpts, lattice]) if len(lattice) else bpts.copy()
    n_fixed = len(bpts)
    if len(pts) > budget:
        raise RefinementDiverged(
            f"seeding needs {len(pts)} vertices, budget {budget} (input {n_input})"
        )

    seg_keys = np.sort(
        np.unique(_edge_key(np.array([s[0] for s in segs]),
                            np.array([s[1] for s in segs])))
    )

    def relax(pts, rounds):
        for _ in range(rounds):
            tri = Delaunay(pts)
            tin = tri.simplices[_inside_triangles(pts, tri.simplices, polygons)]
            if len(tin) == 0:
                return pts
            areas = triangle_areas(pts, tin)
            centroids = pts[tin].mean(axis=1)
            acc = np.zeros_like(pts)
            wsum = np.zeros(len(pts))
            for k in range(3):
                np.add.at(acc, tin[:, k], centroids * areas[:, None])
                np.add.at(wsum, tin[:, k], areas)
            movable = (np.arange(len(pts)) >= n_fixed) & (wsum > 1e-12)
            pts = pts.copy()
            pts[movable] = acc[movable] / wsum[movable][:, None]
        return pts

    def split_boundary(pts, n_fixed, seg_keys, keys_to_split):
        """Insert midpoints of constrained subsegments as fixed vertices."""
        keys_to_split = np.asarray(sorted(keys_to_split), dtype=np.int64)
        mi = (keys_to_split >> 32).astype(np.int64)
        mj = (keys_to_split & 0xFFFFFFFF).astype(np.int64)
        mids = 0.5 * (pts[mi] + pts[mj])
        new_ids = np.arange(len(mids)) + n_fixed  # after the shift below
        shift = len(mids)
        kept = np.setdiff1d(seg_keys, keys_to_split)
        k_lo = (kept >> 32).astype(np.int64)
        k_hi = (kept & 0xFFFFFFFF).astype(np.int64)
        mi = np.where(mi >= n_fixed, mi + shift, mi)
        mj = np.where(mj >= n_fixed, mj + shift, mj)
        k_lo = np.where(k_lo >= n_fixed, k_lo + shift, k_lo)
        k_hi = np.where(k_hi >= n_fixed, k_hi + shift, k_hi)
        seg_keys = np.sort(
            np.concatenate(
                [_edge_key(k_lo, k_hi), _edge_key(mi, new_ids), _edge_key(mj, new_ids)]
            )
        )
        pts = np.concatenate([pts[:n_fixed], mids, pts[n_fixed:]])
        return pts, n_fixed + shift, seg_keys

    pts = relax(pts, 6)
    stuck = 0
    # near input corners sharper than the angle bound no refinement can
    # succeed; triangles that hit the floors below are exempted for good
    min_split = 0.2 * h
    r_min = 0.15 * h
    given_up = set()

    def centroid_key(tri_pts):
        return tuple(np.round(tri_pts.mean(axis=0), 4))

    for _ in range(60):  # cleanup passes
        tri = Delaunay(pts)
        simplices = tri.simplices
        edge_keys = np.unique(
            np.concatenate(
                [
                    _edge_key(simplices[:, 0], simplices[:, 1]),
                    _edge_key(simplices[:, 1], simplices[:, 2]),
                    _edge_key(simplices[:, 2], simplices[:, 0]),
                ]
            )
        )
        # constrained boundary subsegments must appear in the mesh; with
        # boundary spacing <= interior spacing they essentially always do
        missing = np.setdiff1d(seg_keys, edge_keys, assume_unique=True)
        if len(missing):
            pts, n_fixed, seg_keys = split_boundary(pts, n_fixed, seg_keys, missing)
            continue

        inside = _inside_triangles(pts, simplices, polygons)
        tin = simplices[inside]
        if len(tin) == 0:
            raise ValidationError("polygon interior is empty")
        n_constrained = (
            np.isin(_edge_key(tin[:, 0], tin[:, 1]), seg_keys).astype(int)
            + np.isin(_edge_key(tin[:, 1], tin[:, 2]), seg_keys).astype(int)
            + np.isin(_edge_key(tin[:, 2], tin[:, 0]), seg_keys).astype(int)
        )
        angles = triangle_min_angles(pts, tin)
        areas = triangle_areas(pts, tin)
        bad = (areas > max_area) | ((angles < min_angle) & (n_constrained < 2))
        bad_idx = np.flatnonzero(bad)
        if given_up and len(bad_idx):
            keep = [
                k for k in bad_idx if centroid_key(pts[tin[k]]) not in given_up
            ]
            bad_idx = np.asarray(keep, dtype=np.int64)
        if len(bad_idx) == 0:
            return _compact(pts, tin, n_constrained)
        if len(pts) > budget:
            raise RefinementDiverged(
                f"refinement exceeded {budget} vertices (input {n_input})"
            )

        bad_tris = tin[bad_idx]
        cc, cr = circumcenters(pts, bad_tris)
        ok = np.isfinite(cc).all(axis=1)
        bad_tris, cc, cr = bad_tris[ok], cc[ok], cr[ok]
        cc_inside = points_in_polygons(cc, polygons)

        to_split = set()
        tree = cKDTree(pts)
        picked, picked_r = [], []
        for k in np.argsort(-cr):
            t, c, r = bad_tris[k], cc[k], cr[k]
            if cc_inside[k] and r >= r_min:
                # greedy batch insertion; the empty-circumcircle property
                # puts a circumcenter a full circumradius from existing
                # vertices, and the mutual spacing filter keeps the batch
                # from creating slivers
                if tree.query(c)[0] < 0.5 * r:
                    continue  # superseded by an earlier pass; retry later
                if any(
                    np.hypot(*(c - q)) < 0.6 * max(r, rq)
                    for q, rq in zip(picked, picked_r)
                ):
                    continue
                picked.append(c)
                picked_r.append(r)
                continue
            if not cc_inside[k]:
                # off-domain circumcenter encroaches the boundary: split the
                # triangle's constrained edges instead (Ruppert's rule),
                # unless they are already below the split floor
                splittable = False
                for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                    key = int(_edge_key(np.int64(a), np.int64(b)))
                    if key in seg_keys and (
                        np.hypot(*(pts[a] - pts[b])) >= min_split
                    ):
                        to_split.add(key)
                        splittable = True
                if splittable:
                    continue
            # unfixable (cusp-adjacent or vanishing circumradius): exempt
            given_up.add(centroid_key(pts[t]))

        inserted = len(picked) + len(to_split)
        if picked:
            pts = np.concatenate([pts, np.asarray(picked)])
        if to_split:
            pts, n_fixed, seg_keys = split_boundary(pts, n_fixed, seg_keys, to_split)
        if inserted == 0:
            stuck += 1
            if stuck >= 4:
                raise RefinementDiverged(
                    f"{len(bad_idx)} bad triangles remain and no point is insertable"
                )
        else:
            stuck = 0
        pts = relax(pts, 1)  # smooth the batch insertion before retrying

    raise RefinementDiverged("refinement failed to converge within pass limit")


def _compact(points, tris, n_constrained):
    """Drop vertices not referenced by any kept triangle."""
    used = np.unique(tris)
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return points[used], remap[tris], n_constrained
