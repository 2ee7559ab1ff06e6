import json

import numpy as np
import pytest

from vdfield import io as vio
from vdfield.cli import main
from vdfield.mesh2d import RigMesh2D
from vdfield.triangulate import triangle_areas, triangle_min_angles

from conftest import disk_mask, make_doc, make_keypoint, make_rig, make_splats


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "model.ply"
    vio.save_splats(make_splats(np.random.default_rng(41), n=300), p)
    return str(p)


@pytest.fixture(scope="module")
def identity_doc_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "doc.json"
    vio.save_document(make_doc([make_keypoint(make_rig(disk_mask()))]), p)
    return str(p)


def test_info(model_path, capsys):
    assert main(["info", model_path]) == 0
    out = capsys.readouterr().out
    assert "type: splats" in out
    assert "primitives: 300" in out


def test_info_mesh(tmp_path, capsys):
    from conftest import make_box_mesh

    p = str(tmp_path / "m.obj")
    vio.save_mesh(make_box_mesh(), p)
    assert main(["info", p]) == 0
    assert "faces: 12" in capsys.readouterr().out


def test_viewmesh_meets_contract(model_path, tmp_path, capsys):
    out = str(tmp_path / "rig.json")
    png = str(tmp_path / "rig.png")
    code = main(
        ["viewmesh", model_path, "--az", "20", "--pol", "80", "-o", out,
         "--png", png]
    )
    assert code == 0
    frag = json.loads(open(out).read())
    rig = RigMesh2D(
        np.array(frag["rest_vertices"]),
        np.array(frag["faces"]),
        boundary_edge_count=np.array(frag["boundary_edge_count"]),
    )
    angles = np.degrees(triangle_min_angles(rig.rest_vertices, rig.faces))
    areas = triangle_areas(rig.rest_vertices, rig.faces)
    assert angles[rig.boundary_edge_count < 2].min() >= 32.5 - 1e-9
    assert areas.max() <= 20.0 + 1e-9
    from vdfield.render import read_png

    assert read_png(png).shape == (400, 400, 4)


def test_deform_identity_roundtrip(model_path, identity_doc_path, tmp_path):
    out = str(tmp_path / "out.ply")
    code = main(
        ["deform", model_path, identity_doc_path, "--az", "0", "--pol", "90",
         "-o", out]
    )
    assert code == 0
    a = vio.load_splats(model_path)
    b = vio.load_splats(out)
    assert np.max(np.abs(a.means - b.means)) < 1e-5
    assert np.max(np.abs(a.covariances - b.covariances)) < 1e-5


def test_render_and_reproducible(model_path, tmp_path):
    p1, p2 = str(tmp_path / "a.png"), str(tmp_path / "b.png")
    args = ["render", model_path, "--az", "30", "--pol", "75", "-o"]
    assert main(args + [p1]) == 0
    assert main(args + [p2]) == 0
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_turntable(model_path, identity_doc_path, tmp_path):
    out = str(tmp_path / "frames")
    code = main(
        ["turntable", model_path, identity_doc_path, "--frames", "3",
         "--res", "64", "-o", out]
    )
    assert code == 0
    import os

    assert sorted(os.listdir(out)) == [
        "frame_0000.png", "frame_0001.png", "frame_0002.png"
    ]


def test_validate_good_doc(identity_doc_path):
    assert main(["validate", identity_doc_path]) == 0


def test_validate_bad_handle_index(identity_doc_path, tmp_path, capsys):
    data = json.loads(open(identity_doc_path).read())
    nv = len(data["keypoints"][0]["rig"]["rest_vertices"])
    data["keypoints"][0]["handles"] = {
        "vertex_indices": [nv + 5],  # out of range for the rig
        "transforms": [[[1, 0, 0], [0, 1, 0]]],
    }
    p = str(tmp_path / "bad.json")
    open(p, "w").write(json.dumps(data))
    assert main(["validate", p]) == 1
    assert "invalid" in capsys.readouterr().err


def test_missing_file_exit_code(capsys):
    assert main(["validate", "/no/such/file.json"]) == 2
    assert main(["info", "/no/such/model.ply"]) == 2


def test_usage_error_exit_code(capsys):
    assert main(["viewmesh"]) == 64  # missing required arguments
    assert "usage error" in capsys.readouterr().err
    assert main(["info", "model.txt"]) == 64  # unknown extension


def test_corrupt_ply_exit_code(tmp_path, capsys):
    p = str(tmp_path / "bad.ply")
    open(p, "wb").write(b"not a ply at all")
    assert main(["info", p]) == 2
