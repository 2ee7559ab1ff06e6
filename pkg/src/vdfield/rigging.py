"""Handle-based rigging of the 2D mesh: per-vertex weights and linear
blend skinning.

Weights come from the cotangent Laplacian of the rest mesh: either a
harmonic Dirichlet solve per handle (default; bounds and partition of
unity hold by the maximum principle) or bounded biharmonic weights,
which minimize the bilaplacian energy under box constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import SolverFailure, ValidationError
from .mesh2d import RigMesh2D

# keeps the Laplacian an M-matrix on obtuse/low-quality triangles
COT_CLAMP = 1e-6
WEIGHT_TOL = 1e-7


@dataclass(frozen=True)
class HandleSet:
    """User-selected rig vertices with per-handle 2x3 affine transforms."""

    handle_vertex_indices: tuple
    transforms: np.ndarray

    def __post_init__(self):
        idx = tuple(int(i) for i in self.handle_vertex_indices)
        if len(idx) == 0:
            raise ValidationError("at least one handle required")
        if len(set(idx)) != len(idx):
            raise ValidationError("handle indices must be distinct")
        if min(idx) < 0:
            raise ValidationError("negative handle index")
        T = np.asarray(self.transforms, dtype=float)
        if T.shape != (len(idx), 2, 3):
            raise ValidationError("transforms must be (|H|, 2, 3)")
        object.__setattr__(self, "handle_vertex_indices", idx)
        object.__setattr__(self, "transforms", T)

    @classmethod
    def identity(cls, indices):
        n = len(tuple(indices))
        T = np.tile(np.hstack([np.eye(2), np.zeros((2, 1))]), (n, 1, 1))
        return cls(tuple(indices), T)

    def validate_against(self, rig: RigMesh2D):
        if max(self.handle_vertex_indices) >= len(rig.rest_vertices):
            raise ValidationError("handle index out of range for rig")


@dataclass(frozen=True)
class WeightMatrix:
    """(V, |H|) skinning weights: in [0, 1], rows sum to 1, handle rows
    are indicators (all to 1e-7)."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2:
            raise ValidationError("weights must be a matrix")
        if w.min() < -WEIGHT_TOL or w.max() > 1 + WEIGHT_TOL:
            raise ValidationError("weight outside [0, 1]")
        if np.max(np.abs(w.sum(axis=1) - 1.0)) > WEIGHT_TOL:
            raise ValidationError("weight rows must sum to 1")
        object.__setattr__(self, "w", w)


def cotangent_laplacian(vertices, faces):
    """Symmetric cotangent Laplacian (positive semi-definite convention)."""
    V = np.asarray(vertices, dtype=float)
    F = np.asarray(faces, dtype=np.int64)
    rows, cols, vals = [], [], []
    for k in range(3):
        i = F[:, k]
        j = F[:, (k + 1) % 3]
        o = F[:, (k + 2) % 3]
        u = V[i] - V[o]
        v = V[j] - V[o]
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        cot = (u * v).sum(axis=1) / np.maximum(cross, 1e-300)
        cot = np.maximum(0.5 * cot, COT_CLAMP)
        rows += [i, j]
        cols += [j, i]
        vals += [-cot, -cot]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    L = sp.coo_matrix((vals, (rows, cols)), shape=(len(V), len(V))).tocsr()
    L = L - sp.diags(np.asarray(L.sum(axis=1)).ravel())
    return L.tocsc()


def barycentric_mass(vertices, faces):
    """Diagonal (lumped) mass matrix: one third of incident triangle area."""
    V = np.asarray(vertices, dtype=float)
    F = np.asarray(faces, dtype=np.int64)
    e1 = V[F[:, 1]] - V[F[:, 0]]
    e2 = V[F[:, 2]] - V[F[:, 0]]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    m = np.zeros(len(V))
    for k in range(3):
        np.add.at(m, F[:, k], area / 3.0)
    return np.maximum(m, 1e-300)


def _component_labels(n_vertices, faces):
    F = np.asarray(faces, dtype=np.int64)
    rows = np.concatenate([F[:, 0], F[:, 1], F[:, 2]])
    cols = np.concatenate([F[:, 1], F[:, 2], F[:, 0]])
    adj = sp.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices)
    )
    return csgraph.connected_components(adj, directed=False)[1]


def solve_weights(rig: RigMesh2D, handles: HandleSet, method="harmonic"):
    """Per-vertex handle weights on the rest mesh.

    method: "harmonic" (single sparse solve per handle) or
    "bounded_biharmonic" (box-constrained bilaplacian minimization,
    warm-started from the harmonic solution).
    """
    handles.validate_against(rig)
    V = rig.rest_vertices
    F = rig.faces
    n = len(V)
    hidx = np.array(handles.handle_vertex_indices, dtype=np.int64)
    nh = len(hidx)

    w = np.zeros((n, nh))
    labels = _component_labels(n, F)
    handle_labels = set(labels[hidx].tolist())
    orphan = ~np.isin(labels, list(handle_labels))
    if orphan.any():
        # components without a handle ride rigidly with the nearest handle
        for comp in set(labels[orphan].tolist()):
            verts = labels == comp
            centroid = V[verts].mean(axis=0)
            nearest = np.argmin(np.linalg.norm(V[hidx] - centroid, axis=1))
            w[verts, nearest] = 1.0

    solve_mask = ~orphan
    if nh == 1:
        w[solve_mask, 0] = 1.0
        return WeightMatrix(w)

    L = cotangent_laplacian(V, F)
    free = np.flatnonzero(solve_mask & ~np.isin(np.arange(n), hidx))
    w[hidx] = np.eye(nh)

    if len(free):
        # harmonic Dirichlet solve, shared factorization across handles
        L_ff = L[np.ix_(free, free)]
        L_fh = L[np.ix_(free, hidx)]
        lu = spla.splu(L_ff.tocsc())
        w_free = lu.solve(-L_fh.toarray())
        if method == "bounded_biharmonic":
            w_free = _bbw_free(L, barycentric_mass(V, F), free, hidx, w_free)
        elif method != "harmonic":
            raise ValidationError(f"unknown weight method: {method}")
        w[free] = w_free

    # project onto the exact constraint set; solver residuals are below
    # the invariant tolerances after this
    w = np.clip(w, 0.0, 1.0)
    w[hidx] = np.eye(nh)
    s = w.sum(axis=1)
    zero = s <= 1e-12
    if zero.any():
        w[zero] = 1.0 / nh
        s[zero] = 1.0
    w /= s[:, None]
    return WeightMatrix(w)


def _bbw_free(L, mass, free, hidx, w0, max_iter=3000):
    """Bounded biharmonic weights on the free vertices, one handle at a
    time: minimize w^T Q w with Q = L M^{-1} L subject to box [0, 1] and
    the handle interpolation constraints (eliminated)."""
    Minv = sp.diags(1.0 / mass)
    Q = (L @ Minv @ L).tocsr()
    Q_ff = Q[np.ix_(free, free)].tocsr()
    Q_fh = Q[np.ix_(free, hidx)].toarray()

    out = np.empty_like(w0)
    for h in range(len(hidx)):
        b = Q_fh[:, h]  # handle column h carries value 1

        def fun(x):
            Qx = Q_ff @ x
            return x @ Qx + 2.0 * (x @ b), 2.0 * (Qx + b)

        res = scipy.optimize.minimize(
            fun,
            np.clip(w0[:, h], 0.0, 1.0),
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * len(free),
            options={"maxiter": max_iter, "ftol": 1e-12, "gtol": 1e-10},
        )
        if not res.success and res.status != 1:  # 1 = hit maxiter budget
            raise SolverFailure(f"BBW solve failed for handle {h}: {res.message}")
        if res.status == 1:
            raise SolverFailure(f"BBW solve exceeded {max_iter} iterations")
        out[:, h] = res.x
    return out


def apply_skinning(rig: RigMesh2D, handles: HandleSet, weights: WeightMatrix):
    """Deformed vertex positions from weight-blended handle affines.

    v'_i = sum_h w[i, h] * (A_h v_i + b_h).  Returns the (V, 2) array;
    the caller installs it on the rig via set_deformed / with_deformed.
    """
    handles.validate_against(rig)
    V = rig.rest_vertices
    w = weights.w
    if w.shape != (len(V), len(handles.handle_vertex_indices)):
        raise ValidationError("weight matrix shape mismatch")
    A = handles.transforms[:, :, :2]  # (H, 2, 2)
    b = handles.transforms[:, :, 2]  # (H, 2)
    per_handle = np.einsum("hij,vj->vhi", A, V) + b[None, :, :]
    return np.einsum("vh,vhi->vi", w, per_handle)
