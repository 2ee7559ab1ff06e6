"""Applying the deformation field to whole models.

Gaussians push forward through the field's first-order Taylor expansion
at their mean: the mean maps through the field, the covariance through
J Sigma J^T.  Mesh vertices are the degenerate case with covariances
ignored.  Everything is batched over contiguous arrays and deterministic
regardless of scheduling (per-primitive results land in preassigned
slots).
"""

from __future__ import annotations

import numpy as np

from .core import Gaussian, SplatModel, TriMeshModel, Viewpoint
from .defield import DeformationDocument, EvalDiagnostics, evaluate, evaluate_batch
from .errors import DeformationFailed

# deform_model fails outright only past this per-primitive error rate
MAX_FAILURE_FRACTION = 0.01


def pushforward_covariances(covariances, jacobians):
    """J Sigma J^T for stacked (N, 3, 3) inputs, symmetrized against
    round-off."""
    s = jacobians @ covariances @ jacobians.transpose(0, 2, 1)
    return 0.5 * (s + np.transpose(s, (0, 2, 1)))


def deform_gaussian(g: Gaussian, doc: DeformationDocument, v: Viewpoint):
    """Push one Gaussian through the field at view v."""
    diag = EvalDiagnostics()
    mean, J = evaluate(doc, g.mean, v, diag)
    if diag.skipped:
        return g  # evaluation failed for this primitive; leave it unchanged
    cov = pushforward_covariances(g.covariance[None], J[None])[0]
    return Gaussian(mean, cov, g.opacity, g.color)


def deform_model(model, doc: DeformationDocument, v: Viewpoint):
    """Deform a SplatModel or TriMeshModel through the field at view v.

    Raises DeformationFailed if more than 1% of primitives could not be
    evaluated; failed primitives are left at their input state.
    """
    diag = EvalDiagnostics()
    if isinstance(model, TriMeshModel):
        new_pts, _ = evaluate_batch(doc, model.vertices, v, diag)
        _check_failures(diag, len(model.vertices))
        return TriMeshModel(new_pts, model.faces)
    if isinstance(model, SplatModel):
        means, jacobians = evaluate_batch(doc, model.means, v, diag)
        _check_failures(diag, len(model))
        covs = pushforward_covariances(model.covariances, jacobians)
        return SplatModel(means, covs, model.opacities.copy(), model.colors.copy())
    raise TypeError(f"unsupported model type: {type(model).__name__}")


def _check_failures(diag, n_primitives):
    # diagnostics count (layer, point) skips; bound by the worst layer
    worst = max(diag.per_layer.values(), default=0)
    if worst > MAX_FAILURE_FRACTION * n_primitives:
        raise DeformationFailed(
            f"{worst}/{n_primitives} primitives failed to evaluate"
        )
