"""Model ingestion/export and document persistence.

Splat models use the common 3DGS PLY layout (binary little endian,
log-scales + quaternion + logit opacity + SH band-0 color); meshes use
Wavefront OBJ; the edit document is versioned JSON that stores only the
2D rigs and handle transforms, never model geometry.
"""

from __future__ import annotations

import json
import warnings

import numpy as np

from . import camera as cam
from .core import CameraIntrinsics, SplatModel, TriMeshModel, Viewpoint
from .defield import DeformationDocument, KeypointDeformation
from .errors import (
    MissingProperty,
    NonPSDCovariance,
    ParseError,
    SchemaVersionMismatch,
    ValidationError,
)
from .mesh2d import RigMesh2D
from .rigging import HandleSet

SH_C0 = 0.28209479177387814
DOC_VERSION_KEY = "vdfield_doc_version"
DOC_VERSION = 1

_PLY_DTYPES = {
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
    "short": "<i2", "ushort": "<u2", "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
}

SPLAT_PROPS = [
    "x", "y", "z",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
    "opacity",
    "f_dc_0", "f_dc_1", "f_dc_2",
]


def quaternion_to_matrix(q):
    """Rotation matrices from (N, 4) wxyz quaternions (normalized here)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_to_quaternion(R):
    """(N, 4) wxyz quaternions from rotation matrices, Shepperd's method."""
    R = np.atleast_3d(np.asarray(R, dtype=float)).reshape(-1, 3, 3)
    q = np.empty((len(R), 4))
    for i, m in enumerate(R):  # small N at save time; clarity over speed
        tr = np.trace(m)
        if tr > 0:
            s = np.sqrt(tr + 1.0) * 2
            q[i] = [0.25 * s, (m[2, 1] - m[1, 2]) / s,
                    (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        else:
            k = np.argmax(np.diag(m))
            a, b, c = k, (k + 1) % 3, (k + 2) % 3
            s = np.sqrt(1.0 + m[a, a] - m[b, b] - m[c, c]) * 2
            vals = np.empty(4)
            vals[0] = (m[c, b] - m[b, c]) / s
            vals[1 + a] = 0.25 * s
            vals[1 + b] = (m[b, a] + m[a, b]) / s
            vals[1 + c] = (m[c, a] + m[a, c]) / s
            q[i] = vals
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p):
    p = np.clip(p, 1e-7, 1 - 1e-7)
    return np.log(p / (1 - p))


def load_splats(path):
    """Parse a binary-little-endian 3DGS PLY into a SplatModel."""
    with open(path, "rb") as f:
        data = f.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY file (missing header)", offset=0)
    header = data[: end + len(b"end_header\n")]
    body = data[len(header):]

    fields = []
    n_vertices = None
    fmt_ok = False
    for line in header.decode("ascii", "replace").splitlines():
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt_ok = tok[1] == "binary_little_endian"
        elif tok[0] == "element":
            if tok[1] == "vertex":
                n_vertices = int(tok[2])
            elif n_vertices is not None:
                break  # only the vertex element is read
        elif tok[0] == "property" and n_vertices is not None:
            if tok[1] == "list":
                raise ParseError("list properties unsupported", offset=0)
            if tok[1] not in _PLY_DTYPES:
                raise ParseError(f"unknown property type {tok[1]}", offset=0)
            fields.append((tok[2], _PLY_DTYPES[tok[1]]))
    if not fmt_ok:
        raise ParseError("only binary_little_endian PLY is supported", offset=0)
    if n_vertices is None:
        raise ParseError("no vertex element", offset=0)

    names = [f[0] for f in fields]
    for prop in SPLAT_PROPS:
        if prop not in names:
            raise MissingProperty(f"PLY lacks required property {prop!r}")
    if any(name.startswith("f_rest_") for name in names):
        warnings.warn(
            "higher-order SH coefficients dropped; colors flattened to RGB"
        )

    dtype = np.dtype(fields)
    expected = n_vertices * dtype.itemsize
    if len(body) < expected:
        raise ParseError(
            f"truncated body: need {expected} bytes, have {len(body)}",
            offset=len(header) + len(body),
        )
    rec = np.frombuffer(body[:expected], dtype=dtype)

    means = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(float)
    scales = np.exp(
        np.column_stack([rec["scale_0"], rec["scale_1"], rec["scale_2"]]).astype(float)
    )
    quats = np.column_stack(
        [rec["rot_0"], rec["rot_1"], rec["rot_2"], rec["rot_3"]]
    ).astype(float)
    R = quaternion_to_matrix(quats)
    covs = np.einsum("nij,nj,nkj->nik", R, scales**2, R)
    opacities = _sigmoid(rec["opacity"].astype(float))
    colors = np.clip(
        0.5
        + SH_C0
        * np.column_stack([rec["f_dc_0"], rec["f_dc_1"], rec["f_dc_2"]]).astype(float),
        0.0,
        1.0,
    )
    return SplatModel(means, covs, opacities, colors)


def save_splats(model: SplatModel, path):
    """Write a SplatModel back to the 3DGS PLY schema."""
    n = len(model)
    eigvals, eigvecs = np.linalg.eigh(model.covariances)
    if eigvals.min() < -1e-6:
        raise NonPSDCovariance(f"covariance eigenvalue {eigvals.min():.3e} < -1e-6")
    eigvals = np.maximum(eigvals, 1e-12)
    # eigh may return an improper rotation; flip the last axis
    neg = np.linalg.det(eigvecs) < 0
    eigvecs[neg, :, 2] *= -1
    quats = matrix_to_quaternion(eigvecs)
    log_scales = 0.5 * np.log(eigvals)

    dtype = np.dtype([(p, "<f4") for p in SPLAT_PROPS])
    rec = np.empty(n, dtype=dtype)
    rec["x"], rec["y"], rec["z"] = model.means.T
    rec["scale_0"], rec["scale_1"], rec["scale_2"] = log_scales.T
    rec["rot_0"], rec["rot_1"], rec["rot_2"], rec["rot_3"] = quats.T
    rec["opacity"] = _logit(model.opacities)
    fdc = (model.colors - 0.5) / SH_C0
    rec["f_dc_0"], rec["f_dc_1"], rec["f_dc_2"] = fdc.T

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in SPLAT_PROPS]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(rec.tobytes())


def load_mesh(path):
    """Load a Wavefront OBJ (vertices + faces; polygons fanned)."""
    vertices, faces = [], []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "v":
                try:
                    vertices.append([float(x) for x in tok[1:4]])
                except (ValueError, IndexError):
                    raise ParseError(f"bad vertex line", line=lineno)
            elif tok[0] == "f":
                try:
                    idx = [int(t.split("/")[0]) for t in tok[1:]]
                except ValueError:
                    raise ParseError(f"bad face line", line=lineno)
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                if len(idx) < 3:
                    raise ParseError("face with fewer than 3 vertices", line=lineno)
                for k in range(1, len(idx) - 1):  # fan for polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices:
        raise ParseError("OBJ contains no vertices", line=0)
    return TriMeshModel(np.array(vertices), np.array(faces, dtype=np.int64))


def save_mesh(model: TriMeshModel, path):
    with open(path, "w") as f:
        for v in model.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for face in model.faces:
            f.write(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}\n")


# -- document persistence -----------------------------------------------------


def _intrinsics_to_json(intr: CameraIntrinsics):
    return {
        "a_x": intr.a_x, "a_y": intr.a_y, "c_x": intr.c_x, "c_y": intr.c_y,
        "width": intr.width, "height": intr.height,
    }


def _intrinsics_from_json(d):
    return CameraIntrinsics(
        d["a_x"], d["a_y"], d["c_x"], d["c_y"], int(d["width"]), int(d["height"])
    )


def document_to_json(doc: DeformationDocument):
    """JSON-serializable dict for a document (angles in degrees)."""
    keypoints = []
    for k in doc.keypoints:
        keypoints.append(
            {
                "azimuth_deg": np.degrees(k.viewpoint.azimuth),
                "polar_deg": np.degrees(k.viewpoint.polar),
                "orbit_radius": k.pose.orbit_radius,
                "orbit_target": list(k.pose.orbit_target),
                "sigma_azimuth": k.sigma_azimuth,
                "sigma_polar": k.sigma_polar,
                "depth_cut": k.depth_cut,
                "rig": {
                    "rest_vertices": k.rig.rest_vertices.tolist(),
                    "deformed_vertices": k.rig.deformed_vertices.tolist(),
                    "faces": k.rig.faces.tolist(),
                    "boundary_edge_count": k.rig.boundary_edge_count.tolist(),
                },
                "handles": None
                if k.handles is None
                else {
                    "vertex_indices": list(k.handles.handle_vertex_indices),
                    "transforms": [t.tolist() for t in k.handles.transforms],
                },
            }
        )
    return {
        DOC_VERSION_KEY: DOC_VERSION,
        "intrinsics": None
        if doc.intrinsics is None
        else _intrinsics_to_json(doc.intrinsics),
        "blend_mode": doc.blend_mode,
        "base_case_mode": doc.base_case_mode,
        "keypoints": keypoints,
    }


def document_from_json(data):
    version = data.get(DOC_VERSION_KEY)
    if version != DOC_VERSION:
        raise SchemaVersionMismatch(
            f"document version {version!r}, expected {DOC_VERSION}"
        )
    intr = (
        None if data.get("intrinsics") is None
        else _intrinsics_from_json(data["intrinsics"])
    )
    keypoints = []
    for i, kd in enumerate(data.get("keypoints", [])):
        try:
            v = Viewpoint(
                np.radians(kd["azimuth_deg"]), np.radians(kd["polar_deg"])
            )
            if intr is None:
                raise ValidationError("document with keypoints needs intrinsics")
            pose = cam.pose_from_viewpoint(
                v, kd["orbit_radius"], np.array(kd["orbit_target"]), intr
            )
            rig_data = kd["rig"]
            rig = RigMesh2D(
                np.array(rig_data["rest_vertices"]),
                np.array(rig_data["faces"]),
                np.array(rig_data["deformed_vertices"]),
                np.array(rig_data.get("boundary_edge_count"))
                if rig_data.get("boundary_edge_count") is not None
                else None,
            )
            handles = None
            if kd.get("handles") is not None:
                handles = HandleSet(
                    tuple(kd["handles"]["vertex_indices"]),
                    np.array(kd["handles"]["transforms"]),
                )
            keypoints.append(
                KeypointDeformation(
                    v, pose, rig, handles,
                    float(kd["sigma_azimuth"]), float(kd["sigma_polar"]),
                    None if kd.get("depth_cut") is None else float(kd["depth_cut"]),
                )
            )
        except (KeyError, TypeError) as e:
            raise ValidationError(f"keypoint {i}: malformed field {e}") from e
    return DeformationDocument(
        tuple(keypoints),
        intr,
        data.get("blend_mode", "compositional"),
        data.get("base_case_mode", "uniform"),
    )


def dumps_document(doc: DeformationDocument):
    """Canonical JSON text (stable key order, minimal separators)."""
    return json.dumps(document_to_json(doc), sort_keys=True, separators=(",", ":"))


def save_document(doc: DeformationDocument, path):
    with open(path, "w") as f:
        f.write(dumps_document(doc))
        f.write("\n")


def load_document(path):
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e}", line=e.lineno) from e
    return document_from_json(data)
