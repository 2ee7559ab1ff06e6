import numpy as np
import pytest

from vdfield.core import Gaussian, SplatModel, TriMeshModel, Viewpoint
from vdfield.defield import evaluate_batch
from vdfield.errors import DeformationFailed
from vdfield.splats import deform_gaussian, deform_model, pushforward_covariances

from conftest import (
    disk_mask,
    make_box_mesh,
    make_doc,
    make_keypoint,
    make_rig,
    make_splats,
    translated_rig,
)


@pytest.fixture(scope="module")
def doc():
    rig = make_rig(disk_mask())
    return make_doc(
        [
            make_keypoint(translated_rig(rig, [14.0, -6.0]), az=0.1),
            make_keypoint(translated_rig(rig, [-5.0, 9.0]), az=0.7, pol=1.1),
        ]
    )


def test_pushforward_symmetry_and_psd(rng):
    A = rng.normal(size=(30, 3, 3))
    covs = np.einsum("nij,nkj->nik", A, A)
    J = rng.normal(size=(30, 3, 3))
    out = pushforward_covariances(covs, J)
    assert np.allclose(out, np.transpose(out, (0, 2, 1)))
    assert np.linalg.eigvalsh(out).min() > -1e-9


def test_pushforward_identity_jacobian(rng):
    A = rng.normal(size=(5, 3, 3))
    covs = np.einsum("nij,nkj->nik", A, A)
    J = np.tile(np.eye(3), (5, 1, 1))
    assert np.allclose(pushforward_covariances(covs, J), covs)


def test_covariance_matches_monte_carlo(doc, rng):
    """Pushforward covariance equals the sample covariance of pushed
    samples, to first order (small covariance, smooth field)."""
    v = Viewpoint(0.4, 1.3)
    mean = np.array([0.1, -0.05, 0.2])
    L = 0.01 * rng.normal(size=(3, 3))
    cov = L @ L.T + 1e-6 * np.eye(3)
    samples = mean + rng.normal(size=(100_000, 3)) @ L.T
    pushed, _ = evaluate_batch(doc, samples, v)
    mc_cov = np.cov(pushed.T)
    _, J = evaluate_batch(doc, mean[None], v)
    analytic = pushforward_covariances(cov[None], J)[0]
    rel = np.linalg.norm(mc_cov - analytic) / np.linalg.norm(analytic)
    assert rel < 0.02


def test_deform_gaussian_mean_through_field(doc, rng):
    g = Gaussian(np.array([0.0, 0.1, -0.1]), 1e-4 * np.eye(3), 0.7,
                 np.array([1.0, 0.5, 0.2]))
    v = Viewpoint(0.2, 1.4)
    out = deform_gaussian(g, doc, v)
    q, _ = evaluate_batch(doc, g.mean[None], v)
    assert np.allclose(out.mean, q[0])
    assert out.opacity == g.opacity
    assert np.allclose(out.color, g.color)


def test_deform_model_splats_matches_per_gaussian(doc):
    model = make_splats(np.random.default_rng(31), n=40, jitter=0.01)
    v = Viewpoint(0.3, 1.2)
    out = deform_model(model, doc, v)
    for i in range(0, 40, 7):
        g = deform_gaussian(model.gaussian(i), doc, v)
        assert np.allclose(out.means[i], g.mean, atol=1e-12)
        assert np.allclose(out.covariances[i], g.covariance, atol=1e-12)
    assert np.allclose(out.opacities, model.opacities)
    assert np.allclose(out.colors, model.colors)


def test_deform_model_mesh_vertices(doc):
    mesh = make_box_mesh()
    v = Viewpoint(0.5, 1.5)
    out = deform_model(mesh, doc, v)
    q, _ = evaluate_batch(doc, mesh.vertices, v)
    assert isinstance(out, TriMeshModel)
    assert np.allclose(out.vertices, q)
    assert np.array_equal(out.faces, mesh.faces)


def test_deform_model_identity_doc(rng):
    model = make_splats(rng, n=30)
    doc = make_doc([])
    out = deform_model(model, doc, Viewpoint(1.0, 1.0))
    assert np.allclose(out.means, model.means)
    assert np.allclose(out.covariances, model.covariances)


def test_deform_model_fails_on_mass_failure():
    """All points behind a layer's camera exceeds the 1% failure budget."""
    rig = make_rig(disk_mask())
    k = make_keypoint(translated_rig(rig, [10.0, 0.0]), az=0.0, radius=0.5)
    doc = make_doc([k])
    means = np.tile([2.0, 0.0, 0.0], (50, 1))  # all beyond the camera
    model = SplatModel(means, np.tile(1e-6 * np.eye(3), (50, 1, 1)))
    with pytest.raises(DeformationFailed):
        deform_model(model, doc, k.viewpoint)


def test_deform_model_rejects_unknown_type(doc):
    with pytest.raises(TypeError):
        deform_model(object(), doc, Viewpoint(0, 1))
