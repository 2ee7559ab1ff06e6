import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from vdfield import io as vio
from vdfield.service import create_app

from conftest import make_splats


def fresh_client():
    model = make_splats(np.random.default_rng(51), n=250)
    return TestClient(create_app(model))


@pytest.fixture()
def client():
    return fresh_client()


def add_keypoint(c, rev, az=20.0, pol=90.0, **kw):
    meta = c.get("/meta").json()
    body = {"revision": rev, "az": az, "pol": pol,
            "radius": meta["orbit_radius"], **kw}
    r = c.post("/keypoint", json=body)
    assert r.status_code == 200, r.text
    return r.json()


def test_meta(client):
    r = client.get("/meta")
    assert r.status_code == 200
    j = r.json()
    assert j["revision"] == 0
    assert j["model"] == {"type": "splats", "primitives": 250}
    assert j["keypoints"] == []


def test_keypoint_rig_meets_quality_contract(client):
    j = add_keypoint(client, 0)
    from vdfield.triangulate import triangle_areas, triangle_min_angles

    V = np.array(j["rig"]["rest_vertices"])
    F = np.array(j["rig"]["faces"])
    nb = np.array(j["rig"]["boundary_edge_count"])
    angles = np.degrees(triangle_min_angles(V, F))
    assert angles[nb < 2].min() >= 32.5 - 1e-9
    assert triangle_areas(V, F).max() <= 20.0 + 1e-9
    assert j["revision"] == 1


def test_stale_revision_rejected_and_state_unchanged(client):
    j = add_keypoint(client, 0)
    rev = j["revision"]
    r = client.post(
        "/keypoint/0/sigmas", json={"revision": rev - 1, "sigma_az": 1,
                                    "sigma_pol": 1}
    )
    assert r.status_code == 409
    meta = client.get("/meta").json()
    assert meta["revision"] == rev
    assert meta["keypoints"][0]["sigma_azimuth"] == 4.0


def test_handles_weights_shape(client):
    j = add_keypoint(client, 0)
    nv = len(j["rig"]["rest_vertices"])
    idxs = [0, nv // 3, 2 * nv // 3]
    r = client.post(
        "/keypoint/0/handles",
        json={"revision": j["revision"], "vertex_indices": idxs},
    )
    assert r.status_code == 200
    w = np.array(r.json()["weights"])
    assert w.shape == (nv, 3)
    assert np.max(np.abs(w.sum(axis=1) - 1)) < 1e-7
    assert np.allclose(w[idxs], np.eye(3), atol=1e-7)


def test_identity_transforms_leave_rig_at_rest(client):
    j = add_keypoint(client, 0)
    nv = len(j["rig"]["rest_vertices"])
    idxs = [0, nv // 2]
    r = client.post(
        "/keypoint/0/handles",
        json={"revision": j["revision"], "vertex_indices": idxs},
    )
    rev = r.json()["revision"]
    ident = [[[1, 0, 0], [0, 1, 0]]] * 2
    r = client.post(
        "/keypoint/0/transforms", json={"revision": rev, "transforms": ident}
    )
    assert r.status_code == 200
    d = np.array(r.json()["deformed_vertices"])
    assert np.allclose(d, np.array(j["rig"]["rest_vertices"]), atol=1e-9)
    png = base64.b64decode(r.json()["preview_png_b64"])
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_transforms_before_handles_is_400(client):
    j = add_keypoint(client, 0)
    r = client.post(
        "/keypoint/0/transforms",
        json={"revision": j["revision"], "transforms": [[[1, 0, 0], [0, 1, 0]]]},
    )
    assert r.status_code == 400


def test_bad_keypoint_index_is_400(client):
    r = client.post(
        "/keypoint/5/sigmas", json={"revision": 0, "sigma_az": 1, "sigma_pol": 1}
    )
    assert r.status_code == 400


def test_preview_content_negotiation(client):
    r = client.get("/preview", params={"az": 10, "pol": 80})
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    r = client.get(
        "/preview", params={"az": 10, "pol": 80},
        headers={"accept": "application/json"},
    )
    assert set(r.json().keys()) == {"revision", "png_b64"}


def test_preview_identity_deformed_equals_undeformed(client):
    a = client.get("/preview", params={"az": 33, "pol": 70}).content
    b = client.get("/preview", params={"az": 33, "pol": 70, "undeformed": 1}).content
    assert a == b


def test_delete_keypoint(client):
    j = add_keypoint(client, 0)
    r = client.delete("/keypoint/0", params={"revision": j["revision"]})
    assert r.status_code == 200
    assert client.get("/meta").json()["keypoints"] == []


def test_save_document(client, tmp_path):
    j = add_keypoint(client, 0)
    p = str(tmp_path / "doc.json")
    r = client.post("/save", json={"path": p})
    assert r.status_code == 200
    doc = vio.load_document(p)
    assert len(doc.keypoints) == 1


def test_event_determinism(tmp_path):
    """Replaying the same accepted sequence on a fresh session gives a
    byte-identical saved document."""
    script = []

    def run(client):
        rev = 0
        j = add_keypoint(client, rev, az=25.0, pol=85.0)
        rev = j["revision"]
        nv = len(j["rig"]["rest_vertices"])
        idxs = [1, nv // 4, nv // 2]
        r = client.post(
            "/keypoint/0/handles",
            json={"revision": rev, "vertex_indices": idxs},
        )
        rev = r.json()["revision"]
        T = [[[1, 0, 10.0], [0, 1, -5.0]]] + [[[1, 0, 0], [0, 1, 0]]] * 2
        r = client.post(
            "/keypoint/0/transforms", json={"revision": rev, "transforms": T}
        )
        rev = r.json()["revision"]
        r = client.post(
            "/keypoint/0/sigmas",
            json={"revision": rev, "sigma_az": 2.5, "sigma_pol": 3.5},
        )
        return r.json()["revision"]

    p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    c1, c2 = fresh_client(), fresh_client()
    assert run(c1) == run(c2)
    c1.post("/save", json={"path": p1})
    c2.post("/save", json={"path": p2})
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_triangulation_failure_is_422():
    # a model that renders to nothing from every view: fully transparent
    from vdfield.core import SplatModel

    model = SplatModel(
        np.zeros((1, 3)), (1e-4 * np.eye(3))[None], np.array([0.01])
    )
    c = TestClient(create_app(model))
    meta = c.get("/meta").json()
    r = c.post(
        "/keypoint",
        json={"revision": 0, "az": 0, "pol": 90,
              "radius": meta["orbit_radius"]},
    )
    assert r.status_code == 422
