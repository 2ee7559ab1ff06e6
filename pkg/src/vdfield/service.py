"""Local HTTP backend for the interactive editor.

Single session: one immutable model, one mutable document.  Every
mutation must echo the revision it was computed against; a mismatch is
rejected with 409 and leaves the state untouched (optimistic
concurrency).  Mutations are serialized behind a lock; preview reads
render from whatever document snapshot is current.  All handlers are
deterministic, so replaying an accepted request sequence on a fresh
session reproduces the state byte for byte.

Angles in request bodies and query strings are degrees, matching the
CLI.
"""

from __future__ import annotations

import base64
import io as _io
import threading
from typing import List, Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image
from pydantic import BaseModel

from . import camera as cam
from . import io as vio
from . import render as vrender
from .core import SplatModel, Viewpoint
from .defield import DeformationDocument, KeypointDeformation
from .errors import (
    EmptyMask,
    NothingVisible,
    RefinementDiverged,
    ValidationError,
    VdfieldError,
)
from .mesh2d import TriangulationParams, extract_silhouette, triangulate
from .rigging import HandleSet, apply_skinning, solve_weights
from .splats import deform_model

PROTOCOL_VERSION = 1
DEFAULT_PREVIEW_RES = 400


class KeypointRequest(BaseModel):
    revision: int
    az: float
    pol: float
    radius: float
    sigma_az: float = 4.0
    sigma_pol: float = 4.0
    depth_cut: Optional[float] = None


class HandlesRequest(BaseModel):
    revision: int
    vertex_indices: List[int]
    method: str = "harmonic"


class TransformsRequest(BaseModel):
    revision: int
    transforms: List[List[List[float]]]  # per handle, 2x3


class SigmasRequest(BaseModel):
    revision: int
    sigma_az: float
    sigma_pol: float


class SaveRequest(BaseModel):
    path: str


class EditorSession:
    """Server-side state: the model, the live document, and caches."""

    def __init__(self, model, doc: Optional[DeformationDocument] = None,
                 intrinsics=None, orbit_target=None):
        from .cli import default_intrinsics, default_orbit, model_points

        self.model = model
        self.lock = threading.Lock()
        self.revision = 0
        d_radius, d_target = default_orbit(model)
        self.default_radius = d_radius
        self.orbit_target = d_target if orbit_target is None else orbit_target
        intr = intrinsics or default_intrinsics(DEFAULT_PREVIEW_RES)
        if doc is None:
            doc = DeformationDocument((), intr)
        elif doc.intrinsics is None:
            doc = DeformationDocument(
                doc.keypoints, intr, doc.blend_mode, doc.base_case_mode
            )
        self.doc = doc
        self._weights = {}  # keypoint index -> (handle tuple, WeightMatrix)
        self._n_points = len(model_points(model))

    # -- helpers ---------------------------------------------------------------

    def check_revision(self, revision):
        if revision != self.revision:
            raise HTTPException(
                status_code=409,
                detail=f"stale revision {revision}, current is {self.revision}",
            )

    def keypoint(self, i):
        if not 0 <= i < len(self.doc.keypoints):
            raise HTTPException(status_code=400, detail=f"no keypoint {i}")
        return self.doc.keypoints[i]

    def replace_keypoint(self, i, k):
        kps = list(self.doc.keypoints)
        kps[i] = k
        self.doc = self.doc.with_keypoints(kps)

    def bump(self):
        self.revision += 1
        return self.revision


def _rig_json(rig):
    return {
        "rest_vertices": rig.rest_vertices.tolist(),
        "deformed_vertices": rig.deformed_vertices.tolist(),
        "faces": rig.faces.tolist(),
        "boundary_edge_count": rig.boundary_edge_count.tolist(),
    }


def _png_bytes(rgba):
    buf = _io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def create_app(model, doc: Optional[DeformationDocument] = None):
    session = EditorSession(model, doc)
    app = FastAPI(title="vdfield editor service")
    app.state.session = session
    # the browser editor may be served from a different origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(VdfieldError)
    async def _vdfield_error(request, exc):
        # triangulation/silhouette failures are actionable 422s; anything
        # else that slips through is an invariant violation (400)
        code = 422 if isinstance(exc, (EmptyMask, RefinementDiverged, NothingVisible)) else 400
        return Response(
            content='{"detail":"' + str(exc).replace('"', "'") + '"}',
            status_code=code,
            media_type="application/json",
        )

    def _deformed(v: Viewpoint):
        return deform_model(session.model, session.doc, v)

    def _pose_for(v: Viewpoint, res):
        from .cli import default_intrinsics

        intr = session.doc.intrinsics or default_intrinsics(res)
        return cam.pose_from_viewpoint(
            v, session.default_radius, session.orbit_target, intr
        )

    @app.get("/meta")
    def meta():
        kind = "splats" if isinstance(session.model, SplatModel) else "mesh"
        intr = session.doc.intrinsics
        return {
            "protocol_version": PROTOCOL_VERSION,
            "revision": session.revision,
            "model": {"type": kind, "primitives": len(session.model)},
            "intrinsics": None if intr is None else vio._intrinsics_to_json(intr),
            "orbit_radius": session.default_radius,
            "orbit_target": session.orbit_target.tolist(),
            "blend_mode": session.doc.blend_mode,
            "keypoints": [
                {
                    "azimuth_deg": float(np.degrees(k.viewpoint.azimuth)),
                    "polar_deg": float(np.degrees(k.viewpoint.polar)),
                    "sigma_azimuth": k.sigma_azimuth,
                    "sigma_polar": k.sigma_polar,
                    "depth_cut": k.depth_cut,
                    "n_handles": 0 if k.handles is None
                    else len(k.handles.handle_vertex_indices),
                    "n_rig_vertices": len(k.rig.rest_vertices),
                }
                for k in session.doc.keypoints
            ],
        }

    @app.post("/keypoint")
    def add_keypoint(req: KeypointRequest):
        with session.lock:
            session.check_revision(req.revision)
            v = Viewpoint(np.radians(req.az), np.radians(req.pol))
            pose = cam.pose_from_viewpoint(
                v, req.radius, session.orbit_target, session.doc.intrinsics
            )
            deformed = _deformed(v)
            mask = vrender.render_mask(deformed, pose)
            rig = triangulate(extract_silhouette(mask), TriangulationParams())
            k = KeypointDeformation(
                v, pose, rig, None, req.sigma_az, req.sigma_pol, req.depth_cut
            )
            session.doc = session.doc.with_keypoints(
                session.doc.keypoints + (k,)
            )
            index = len(session.doc.keypoints) - 1
            return {
                "revision": session.bump(),
                "index": index,
                "rig": _rig_json(rig),
            }

    @app.post("/keypoint/{i}/handles")
    def set_handles(i: int, req: HandlesRequest):
        with session.lock:
            session.check_revision(req.revision)
            k = session.keypoint(i)
            handles = HandleSet.identity(req.vertex_indices)
            weights = solve_weights(k.rig, handles, method=req.method)
            # handles reset the warp: a fresh selection starts from rest
            rig = k.rig.with_deformed(k.rig.rest_vertices.copy())
            session.replace_keypoint(
                i,
                KeypointDeformation(
                    k.viewpoint, k.pose, rig, handles,
                    k.sigma_azimuth, k.sigma_polar, k.depth_cut,
                ),
            )
            session._weights[i] = (tuple(handles.handle_vertex_indices), weights)
            return {
                "revision": session.bump(),
                "weights": weights.w.tolist(),
            }

    @app.post("/keypoint/{i}/transforms")
    def set_transforms(i: int, req: TransformsRequest):
        with session.lock:
            session.check_revision(req.revision)
            k = session.keypoint(i)
            if k.handles is None:
                raise HTTPException(
                    status_code=400, detail=f"keypoint {i} has no handles yet"
                )
            handles = HandleSet(
                k.handles.handle_vertex_indices, np.asarray(req.transforms)
            )
            cached = session._weights.get(i)
            if cached is None or cached[0] != handles.handle_vertex_indices:
                cached = (
                    handles.handle_vertex_indices,
                    solve_weights(k.rig, handles),
                )
                session._weights[i] = cached
            deformed_v = apply_skinning(k.rig, handles, cached[1])
            rig = k.rig.with_deformed(deformed_v)
            session.replace_keypoint(
                i,
                KeypointDeformation(
                    k.viewpoint, k.pose, rig, handles,
                    k.sigma_azimuth, k.sigma_polar, k.depth_cut,
                ),
            )
            preview = vrender.render_preview(_deformed(k.viewpoint), k.pose)
            return {
                "revision": session.bump(),
                "deformed_vertices": deformed_v.tolist(),
                "preview_png_b64": base64.b64encode(_png_bytes(preview)).decode(),
            }

    @app.post("/keypoint/{i}/sigmas")
    def set_sigmas(i: int, req: SigmasRequest):
        with session.lock:
            session.check_revision(req.revision)
            k = session.keypoint(i)
            session.replace_keypoint(
                i,
                KeypointDeformation(
                    k.viewpoint, k.pose, k.rig, k.handles,
                    req.sigma_az, req.sigma_pol, k.depth_cut,
                ),
            )
            return {"revision": session.bump()}

    @app.delete("/keypoint/{i}")
    def delete_keypoint(i: int, revision: int = Query(...)):
        with session.lock:
            session.check_revision(revision)
            session.keypoint(i)  # 400 if out of range
            kps = list(session.doc.keypoints)
            del kps[i]
            session.doc = session.doc.with_keypoints(kps)
            # weight cache is keyed by index; shift entries past the gap
            session._weights = {
                (j if j < i else j - 1): w
                for j, w in session._weights.items()
                if j != i
            }
            return {"revision": session.bump()}

    @app.get("/preview")
    def preview(request: Request, az: float, pol: float,
                res: int = DEFAULT_PREVIEW_RES, undeformed: int = 0):
        v = Viewpoint(np.radians(az), np.radians(pol))
        model = session.model if undeformed else _deformed(v)
        png = _png_bytes(
            vrender.render_preview(model, _pose_for(v, res), resolution=res)
        )
        if "application/json" in request.headers.get("accept", ""):
            return {
                "revision": session.revision,
                "png_b64": base64.b64encode(png).decode(),
            }
        return Response(content=png, media_type="image/png")

    @app.post("/save")
    def save(req: SaveRequest):
        with session.lock:
            vio.save_document(session.doc, req.path)
            return {"revision": session.revision, "path": req.path}

    return app
