import numpy as np
import pytest

from vdfield.errors import ValidationError
from vdfield.mesh2d import RigMesh2D
from vdfield.rigging import (
    HandleSet,
    WeightMatrix,
    apply_skinning,
    barycentric_mass,
    cotangent_laplacian,
    solve_weights,
)

from conftest import disk_mask, make_rig


def pick_handles(rig, rng, k=4):
    idx = rng.choice(len(rig.rest_vertices), size=k, replace=False)
    return HandleSet.identity(tuple(int(i) for i in idx))


def grid_rig(n=8, scale=10.0):
    """Regular triangulated grid, convenient for closed-form checks."""
    xs = np.linspace(0, scale, n)
    V = np.array([[x, y] for y in xs for x in xs])
    F = []
    for j in range(n - 1):
        for i in range(n - 1):
            a = j * n + i
            F += [[a, a + 1, a + n], [a + 1, a + n + 1, a + n]]
    return RigMesh2D(V, np.array(F))


def check_invariants(w, hidx, tol=1e-7):
    assert w.min() >= -tol and w.max() <= 1 + tol
    assert np.max(np.abs(w.sum(axis=1) - 1.0)) <= tol
    assert np.max(np.abs(w[list(hidx)] - np.eye(len(hidx)))) <= tol


@pytest.mark.parametrize("method", ["harmonic", "bounded_biharmonic"])
def test_weight_invariants(method):
    rig = grid_rig(7)
    rng = np.random.default_rng(21)
    handles = pick_handles(rig, rng, k=3)
    w = solve_weights(rig, handles, method=method).w
    check_invariants(w, handles.handle_vertex_indices)


def test_harmonic_weights_are_harmonic():
    """L w = 0 at every free vertex (discrete harmonicity)."""
    rig = grid_rig(9)
    rng = np.random.default_rng(22)
    handles = pick_handles(rig, rng, k=4)
    w = solve_weights(rig, handles, "harmonic").w
    L = cotangent_laplacian(rig.rest_vertices, rig.faces)
    r = L @ w
    free = np.setdiff1d(
        np.arange(len(rig.rest_vertices)), handles.handle_vertex_indices
    )
    assert np.max(np.abs(r[free])) < 1e-8


def test_bbw_no_worse_than_harmonic_energy():
    """BBW minimizes the bilaplacian energy, so it cannot exceed the
    clamped harmonic warm start's energy."""
    rig = grid_rig(6)
    rng = np.random.default_rng(23)
    handles = pick_handles(rig, rng, k=3)
    L = cotangent_laplacian(rig.rest_vertices, rig.faces)
    import scipy.sparse as sp

    Minv = sp.diags(1.0 / barycentric_mass(rig.rest_vertices, rig.faces))
    Q = (L @ Minv @ L).toarray()
    wh = solve_weights(rig, handles, "harmonic").w
    wb = solve_weights(rig, handles, "bounded_biharmonic").w
    for h in range(3):
        eh = wh[:, h] @ Q @ wh[:, h]
        eb = wb[:, h] @ Q @ wb[:, h]
        assert eb <= eh + 1e-8 * max(1.0, eh)


def test_single_handle_all_ones():
    rig = grid_rig(5)
    w = solve_weights(rig, HandleSet.identity((7,))).w
    assert np.allclose(w, 1.0)


def test_unknown_method_rejected():
    rig = grid_rig(4)
    with pytest.raises(ValidationError):
        solve_weights(rig, HandleSet.identity((0, 5)), method="nope")


def test_translation_covariance():
    """Adding t to every handle translation moves all vertices by t."""
    rig = make_rig(disk_mask(r=80.0))
    rng = np.random.default_rng(24)
    handles = pick_handles(rig, rng, k=5)
    w = solve_weights(rig, handles)
    T = rng.normal(0, 3, (5, 2, 3))
    t = np.array([4.0, -2.0])
    shifted = T.copy()
    shifted[:, :, 2] += t
    p0 = apply_skinning(rig, HandleSet(handles.handle_vertex_indices, T), w)
    p1 = apply_skinning(rig, HandleSet(handles.handle_vertex_indices, shifted), w)
    assert np.max(np.abs(p1 - (p0 + t))) < 1e-9


def test_skinning_matches_brute_force():
    rig = grid_rig(6)
    rng = np.random.default_rng(25)
    handles = pick_handles(rig, rng, k=3)
    T = rng.normal(0, 1, (3, 2, 3))
    hs = HandleSet(handles.handle_vertex_indices, T)
    w = solve_weights(rig, hs)
    fast = apply_skinning(rig, hs, w)
    V = rig.rest_vertices
    for i in range(len(V)):
        acc = np.zeros(2)
        for h in range(3):
            acc += w.w[i, h] * (T[h, :, :2] @ V[i] + T[h, :, 2])
        assert np.allclose(fast[i], acc, atol=1e-12)


def test_identity_transforms_fix_rest():
    rig = grid_rig(6)
    rng = np.random.default_rng(26)
    handles = pick_handles(rig, rng, k=4)
    w = solve_weights(rig, handles)
    out = apply_skinning(rig, handles, w)
    assert np.allclose(out, rig.rest_vertices, atol=1e-9)


def test_handle_set_validation():
    with pytest.raises(ValidationError):
        HandleSet.identity(())
    with pytest.raises(ValidationError):
        HandleSet.identity((1, 1))
    with pytest.raises(ValidationError):
        HandleSet((0,), np.zeros((2, 2, 3)))


def test_weight_matrix_validation():
    with pytest.raises(ValidationError):
        WeightMatrix(np.array([[0.5, 0.4]]))  # rows must sum to 1
    with pytest.raises(ValidationError):
        WeightMatrix(np.array([[1.5, -0.5]]))


def test_orphan_component_rides_nearest_handle():
    """A component without handles gets rigid weight 1 on the closest one."""
    g = grid_rig(4, scale=3.0)
    V2 = g.rest_vertices + [100.0, 0.0]
    V = np.concatenate([g.rest_vertices, V2])
    F = np.concatenate([g.faces, g.faces + len(g.rest_vertices)])
    rig = RigMesh2D(V, F)
    handles = HandleSet.identity((0, 5))  # both in the first component
    w = solve_weights(rig, handles).w
    check_invariants(w, (0, 5))
    far = np.arange(len(g.rest_vertices), len(V))
    assert np.allclose(w[far].sum(axis=1), 1.0)
    assert len(np.unique(w[far], axis=0)) == 1  # rigid: one weight row
