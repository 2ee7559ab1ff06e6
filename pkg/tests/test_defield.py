import numpy as np
import pytest

from vdfield import camera as cam
from vdfield.core import Viewpoint
from vdfield.defield import (
    DeformationDocument,
    EvalDiagnostics,
    basis,
    evaluate,
    evaluate_batch,
    lift_keypoint,
)
from vdfield.errors import DepthTooSmall, ValidationError

from conftest import (
    disk_mask,
    make_doc,
    make_intrinsics,
    make_keypoint,
    make_rig,
    translated_rig,
)


@pytest.fixture(scope="module")
def rig():
    return make_rig(disk_mask())


def sample_points(rng, n=40, spread=0.25):
    return rng.normal(0.0, spread, (n, 3))


def test_basis_is_one_at_keypoint(rig):
    k = make_keypoint(rig, az=1.0, pol=1.2)
    assert basis(k, Viewpoint(1.0, 1.2)) == 1.0


def test_basis_decays_and_wraps(rig):
    k = make_keypoint(rig, az=0.1, pol=np.pi / 2, sigma_az=4.0, sigma_pol=4.0)
    near = basis(k, Viewpoint(0.3, np.pi / 2))
    far = basis(k, Viewpoint(np.pi, np.pi / 2))
    assert 0 < far < near < 1
    # wrapped distance: azimuth 2*pi - 0.1 is only 0.2 away from 0.1
    assert basis(k, Viewpoint(2 * np.pi - 0.1, np.pi / 2)) == pytest.approx(
        np.exp(-4.0 * 0.2**2)
    )


def test_empty_document_is_identity(rng):
    doc = make_doc([])
    P = sample_points(rng)
    q, J = evaluate_batch(doc, P, Viewpoint(0.4, 1.0))
    assert np.allclose(q, P)
    assert np.allclose(J, np.eye(3))


def test_identity_rig_is_identity(rig, rng):
    doc = make_doc([make_keypoint(rig)])
    P = sample_points(rng)
    q, J = evaluate_batch(doc, P, Viewpoint(0.0, np.pi / 2))
    assert np.allclose(q, P, atol=1e-8)
    assert np.allclose(J, np.eye(3), atol=1e-8)


def test_keypoint_exactness_image_space(rig, rng):
    """At the keypoint view the projected deformation equals the 2D warp."""
    k0 = make_keypoint(translated_rig(rig, [12.0, -7.0]))
    doc = make_doc([k0])
    P = sample_points(rng, 30)
    q, _ = evaluate_batch(doc, P, k0.viewpoint)
    uv0 = cam.project(cam.to_camera(P, k0.pose), k0.pose.intrinsics)
    uv1 = cam.project(cam.to_camera(q, k0.pose), k0.pose.intrinsics)
    expected = k0.rig.eval_phi_batch(uv0)[0]
    assert np.max(np.abs(uv1 - expected)) < 1e-6


def test_fades_to_identity_far_away(rig, rng):
    k0 = make_keypoint(translated_rig(rig, [25.0, 0.0]), az=0.0, sigma_az=8.0,
                       sigma_pol=8.0)
    doc = make_doc([k0])
    P = sample_points(rng, 30)
    q, _ = evaluate_batch(doc, P, Viewpoint(np.pi, np.pi / 2))
    near, _ = evaluate_batch(doc, P, Viewpoint(0.05, np.pi / 2))
    assert np.abs(q - P).max() < 1e-3 * np.abs(near - P).max()


def test_compositional_order_sensitive(rig, rng):
    """Two non-commuting layers evaluated at a view where both are active."""
    sheared = rig.with_deformed(
        (rig.rest_vertices - 200.0) @ np.array([[1.0, 0.4], [0.0, 1.0]]).T + 200.0
    )
    shifted = translated_rig(rig, [30.0, 0.0])
    ka = make_keypoint(sheared, az=0.4, sigma_az=0.5, sigma_pol=0.5)
    kb = make_keypoint(shifted, az=0.8, sigma_az=0.5, sigma_pol=0.5)
    v = Viewpoint(0.6, np.pi / 2)
    P = sample_points(rng, 25)
    q_ab, _ = evaluate_batch(make_doc([ka, kb]), P, v)
    q_ba, _ = evaluate_batch(make_doc([kb, ka]), P, v)
    assert np.abs(q_ab - q_ba).max() > 1e-6


def test_linear_mode_order_invariant(rig, rng):
    sheared = rig.with_deformed(
        (rig.rest_vertices - 200.0) @ np.array([[1.0, 0.4], [0.0, 1.0]]).T + 200.0
    )
    shifted = translated_rig(rig, [30.0, 0.0])
    ka = make_keypoint(sheared, az=0.4, sigma_az=0.5, sigma_pol=0.5)
    kb = make_keypoint(shifted, az=0.8, sigma_az=0.5, sigma_pol=0.5)
    v = Viewpoint(0.6, np.pi / 2)
    P = sample_points(rng, 25)
    q_ab, _ = evaluate_batch(make_doc([ka, kb], blend_mode="linear"), P, v)
    q_ba, _ = evaluate_batch(make_doc([kb, ka], blend_mode="linear"), P, v)
    assert np.abs(q_ab - q_ba).max() < 1e-12


def test_paper_literal_base_case(rig, rng):
    """First layer applies in full regardless of the view."""
    k0 = make_keypoint(translated_rig(rig, [20.0, 0.0]), az=0.0,
                       sigma_az=50.0, sigma_pol=50.0)
    far = Viewpoint(np.pi, np.pi / 2)
    P = sample_points(rng, 20)
    uniform, _ = evaluate_batch(make_doc([k0]), P, far)
    literal, _ = evaluate_batch(
        make_doc([k0], base_case_mode="paper_literal"), P, far
    )
    assert np.abs(uniform - P).max() < 1e-9  # faded out
    assert np.abs(literal - P).max() > 1e-3  # still fully applied


def test_jacobian_matches_finite_differences(rig, rng):
    layers = [
        make_keypoint(translated_rig(rig, [10.0, 5.0]), az=0.2),
        make_keypoint(translated_rig(rig, [-8.0, 3.0]), az=0.9, pol=1.2),
        make_keypoint(translated_rig(rig, [0.0, -12.0]), az=5.5, pol=1.8),
    ]
    doc = make_doc(layers)
    v = Viewpoint(0.5, 1.4)
    P = sample_points(rng, 10)
    _, J = evaluate_batch(doc, P, v)
    eps = 1e-6
    for k in range(3):
        d = np.zeros(3)
        d[k] = eps
        num = (
            evaluate_batch(doc, P + d, v)[0] - evaluate_batch(doc, P - d, v)[0]
        ) / (2 * eps)
        assert np.max(np.abs(J[:, :, k] - num)) < 1e-5


def test_depth_cut_passes_near_points(rig):
    k = make_keypoint(translated_rig(rig, [15.0, 0.0]), az=0.0, depth_cut=3.0)
    doc = make_doc([k])
    # camera sits at x = +3 looking at the origin; a point at x = 0.5 has
    # camera depth 2.5 < cut, so it must pass through unchanged
    near_pt = np.array([[0.5, 0.0, 0.0]])
    far_pt = np.array([[-0.5, 0.0, 0.0]])
    qn, Jn = evaluate_batch(doc, near_pt, k.viewpoint)
    qf, _ = evaluate_batch(doc, far_pt, k.viewpoint)
    assert np.allclose(qn, near_pt) and np.allclose(Jn, np.eye(3))
    assert np.abs(qf - far_pt).max() > 1e-3


def test_behind_camera_point_skipped_and_counted(rig):
    k = make_keypoint(translated_rig(rig, [15.0, 0.0]), az=0.0, radius=1.0)
    doc = make_doc([k])
    behind = np.array([[2.0, 0.0, 0.0]])  # beyond the camera at x = 1
    diag = EvalDiagnostics()
    q, J = evaluate_batch(doc, behind, k.viewpoint, diag)
    assert diag.skipped == 1
    assert np.allclose(q, behind) and np.allclose(J, np.eye(3))


def test_lift_keypoint_raises_behind_camera(rig):
    k = make_keypoint(rig, az=0.0, radius=1.0)
    with pytest.raises(DepthTooSmall):
        lift_keypoint(k, np.array([2.0, 0.0, 0.0]))


def test_single_point_evaluate_matches_batch(rig, rng):
    doc = make_doc([make_keypoint(translated_rig(rig, [9.0, 1.0]))])
    v = Viewpoint(0.3, 1.5)
    P = sample_points(rng, 5)
    qb, Jb = evaluate_batch(doc, P, v)
    for i in range(len(P)):
        q, J = evaluate(doc, P[i], v)
        assert np.allclose(q, qb[i]) and np.allclose(J, Jb[i])


def test_document_validation(rig):
    with pytest.raises(ValidationError):
        DeformationDocument((), make_intrinsics(), blend_mode="magic")
    with pytest.raises(ValidationError):
        make_keypoint(rig, sigma_az=-1.0)
    k = make_keypoint(rig, az=0.5)
    with pytest.raises(ValidationError):
        # pose made for a different viewpoint
        type(k)(Viewpoint(1.0, np.pi / 2), k.pose, rig, None, 4.0, 4.0, None)
