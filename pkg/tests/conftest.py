import numpy as np
import pytest

from vdfield import camera as cam
from vdfield.core import CameraIntrinsics, SplatModel, TriMeshModel, Viewpoint
from vdfield.defield import DeformationDocument, KeypointDeformation
from vdfield.mesh2d import RigMesh2D, TriangulationParams, extract_silhouette, triangulate

RES = 400


def make_intrinsics(res=RES):
    return CameraIntrinsics(float(res), float(res), res / 2.0, res / 2.0, res, res)


def make_splats(rng, n=200, spread=0.3, jitter=0.05):
    """Random blob of Gaussians around the origin."""
    means = rng.normal(0.0, spread, (n, 3))
    A = rng.normal(0.0, jitter, (n, 3, 3))
    covs = np.einsum("nij,nkj->nik", A, A) + 1e-4 * np.eye(3)
    return SplatModel(means, covs, np.full(n, 0.9), rng.uniform(0, 1, (n, 3)))


def make_box_mesh(half=0.4):
    """Axis-aligned cube mesh centered at the origin."""
    s = half
    V = np.array(
        [[x, y, z] for x in (-s, s) for y in (-s, s) for z in (-s, s)], dtype=float
    )
    F = np.array(
        [
            [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
            [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
            [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
        ]
    )
    return TriMeshModel(V, F)


def disk_mask(res=RES, cx=200.0, cy=200.0, r=120.0):
    yy, xx = np.mgrid[0:res, 0:res]
    return (xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2 < r * r


def make_rig(mask=None, params=TriangulationParams()):
    if mask is None:
        mask = disk_mask()
    return triangulate(extract_silhouette(mask), params)


def translated_rig(rig, offset):
    """Copy of a rig with every deformed vertex moved by a 2D offset."""
    return rig.with_deformed(rig.rest_vertices + np.asarray(offset, dtype=float))


def make_keypoint(rig, az=0.0, pol=np.pi / 2, radius=3.0, target=(0.0, 0.0, 0.0),
                  intr=None, sigma_az=4.0, sigma_pol=4.0, depth_cut=None):
    intr = intr or make_intrinsics()
    v = Viewpoint(az, pol)
    pose = cam.pose_from_viewpoint(v, radius, np.asarray(target, float), intr)
    return KeypointDeformation(v, pose, rig, None, sigma_az, sigma_pol, depth_cut)


def make_doc(keypoints, intr=None, **kw):
    return DeformationDocument(tuple(keypoints), intr or make_intrinsics(), **kw)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240824)


@pytest.fixture(scope="session")
def disk_rig():
    return make_rig()


@pytest.fixture(scope="session")
def small_splats():
    return make_splats(np.random.default_rng(7), n=150)


@pytest.fixture(scope="session")
def box_mesh():
    return make_box_mesh()
