"""Batch command-line entry points over the engine.

Model files are recognized by extension (.ply = Gaussian splats,
.obj = triangle mesh); all angles on the command line are degrees.
Exit codes: 0 success, 1 validation failure, 2 I/O or parse failure,
64 usage error.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import camera as cam
from . import io as vio
from . import render as vrender
from .core import CameraIntrinsics, SplatModel, TriMeshModel, Viewpoint
from .defield import DeformationDocument
from .errors import ParseError, VdfieldError
from .mesh2d import TriangulationParams, extract_silhouette, triangulate
from .splats import deform_model

EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_USAGE = 64


def load_model(path):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ply":
        return vio.load_splats(path)
    if ext == ".obj":
        return vio.load_mesh(path)
    raise click.UsageError(f"unrecognized model extension {ext!r} (.ply or .obj)")


def save_model(model, path):
    if isinstance(model, SplatModel):
        vio.save_splats(model, path)
    else:
        vio.save_mesh(model, path)


def model_points(model):
    return model.means if isinstance(model, SplatModel) else model.vertices


def default_intrinsics(res):
    """Square pinhole with a ~53 degree horizontal field of view."""
    return CameraIntrinsics(float(res), float(res), res / 2.0, res / 2.0, res, res)


def default_orbit(model):
    """(radius, target): centroid target, radius at 3x the bounding sphere."""
    pts = model_points(model)
    target = pts.mean(axis=0)
    r = float(np.linalg.norm(pts - target, axis=1).max())
    return 3.0 * max(r, 1e-6), target


def _parse_target(text):
    if text is None:
        return None
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        vals = []
    if len(vals) != 3:
        raise click.UsageError("--target must be 'x,y,z'")
    return np.array(vals)


def _pose(model, doc, az, pol, radius, target, res):
    intr = doc.intrinsics if doc is not None and doc.intrinsics else None
    if intr is None:
        intr = default_intrinsics(res)
    d_radius, d_target = default_orbit(model)
    v = Viewpoint(np.radians(az), np.radians(pol))
    return cam.pose_from_viewpoint(
        v,
        radius if radius is not None else d_radius,
        target if target is not None else d_target,
        intr,
    ), v


@click.group()
def cli():
    """View-dependent deformation of splat and mesh models."""


@cli.command()
@click.argument("model_path", metavar="MODEL")
def info(model_path):
    """Print primitive counts and world-space bounds of a model."""
    model = load_model(model_path)
    pts = model_points(model)
    kind = "splats" if isinstance(model, SplatModel) else "mesh"
    click.echo(f"type: {kind}")
    click.echo(f"primitives: {len(model)}")
    if isinstance(model, TriMeshModel):
        click.echo(f"faces: {len(model.faces)}")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    click.echo(f"bounds min: {lo[0]:.6g} {lo[1]:.6g} {lo[2]:.6g}")
    click.echo(f"bounds max: {hi[0]:.6g} {hi[1]:.6g} {hi[2]:.6g}")


def _draw_edges(img, rig, color=(255, 64, 64, 255)):
    """Rasterize rig-mesh edges onto an RGBA image, in place."""
    res = img.shape[0]
    V = rig.rest_vertices
    F = rig.faces
    edges = np.unique(
        np.sort(
            np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1
        ),
        axis=0,
    )
    for a, b in edges:
        p, q = V[a], V[b]
        n = max(2, int(np.ceil(np.linalg.norm(q - p))) + 1)
        t = np.linspace(0.0, 1.0, n)[:, None]
        xy = np.round(p + t * (q - p)).astype(int)
        ok = (
            (xy[:, 0] >= 0) & (xy[:, 0] < res) & (xy[:, 1] >= 0) & (xy[:, 1] < res)
        )
        img[xy[ok, 1], xy[ok, 0]] = color


@cli.command()
@click.argument("model_path", metavar="MODEL")
@click.option("--az", type=float, required=True, help="Azimuth in degrees.")
@click.option("--pol", type=float, required=True, help="Polar angle in degrees.")
@click.option("--radius", type=float, default=None, help="Orbit radius.")
@click.option("--target", default=None, help="Orbit target 'x,y,z'.")
@click.option("--min-angle", type=float, default=32.5, show_default=True)
@click.option("--max-area", type=float, default=20.0, show_default=True)
@click.option("--res", type=int, default=400, show_default=True)
@click.option("-o", "--output", required=True, help="Rig-mesh JSON path.")
@click.option("--png", default=None, help="Debug PNG of the mesh over the render.")
def viewmesh(model_path, az, pol, radius, target, min_angle, max_area, res,
             output, png):
    """Triangulate the model's silhouette from a view."""
    model = load_model(model_path)
    pose, _ = _pose(model, None, az, pol, radius, _parse_target(target), res)
    mask = vrender.render_mask(model, pose, resolution=res)
    params = TriangulationParams(min_angle, max_area, res)
    rig = triangulate(extract_silhouette(mask), params)
    fragment = {
        "rest_vertices": rig.rest_vertices.tolist(),
        "deformed_vertices": rig.deformed_vertices.tolist(),
        "faces": rig.faces.tolist(),
        "boundary_edge_count": rig.boundary_edge_count.tolist(),
    }
    with open(output, "w") as f:
        json.dump(fragment, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")
    if png:
        img = vrender.render_preview(model, pose, resolution=res)
        _draw_edges(img, rig)
        vrender.write_png(img, png)
    click.echo(
        f"rig: {len(rig.rest_vertices)} vertices, {len(rig.faces)} triangles"
    )


@cli.command()
@click.argument("model_path", metavar="MODEL")
@click.argument("doc_path", metavar="DOC")
@click.option("--az", type=float, required=True, help="Azimuth in degrees.")
@click.option("--pol", type=float, required=True, help="Polar angle in degrees.")
@click.option("-o", "--output", required=True, help="Deformed model path.")
def deform(model_path, doc_path, az, pol, output):
    """Deform a model through a document at a view and save it."""
    model = load_model(model_path)
    doc = vio.load_document(doc_path)
    v = Viewpoint(np.radians(az), np.radians(pol))
    save_model(deform_model(model, doc, v), output)
    click.echo(f"wrote {output}")


@cli.command()
@click.argument("model_path", metavar="MODEL")
@click.argument("doc_path", metavar="[DOC]", required=False)
@click.option("--az", type=float, required=True, help="Azimuth in degrees.")
@click.option("--pol", type=float, required=True, help="Polar angle in degrees.")
@click.option("--radius", type=float, default=None, help="Orbit radius.")
@click.option("--target", default=None, help="Orbit target 'x,y,z'.")
@click.option("--res", type=int, default=400, show_default=True)
@click.option("-o", "--output", required=True, help="Output PNG path.")
def render(model_path, doc_path, az, pol, radius, target, res, output):
    """Render the (optionally deformed) model from a view to a PNG."""
    model = load_model(model_path)
    doc = vio.load_document(doc_path) if doc_path else None
    pose, v = _pose(model, doc, az, pol, radius, _parse_target(target), res)
    if doc is not None:
        model = deform_model(model, doc, v)
    vrender.write_png(vrender.render_preview(model, pose, resolution=res), output)
    click.echo(f"wrote {output}")


@cli.command()
@click.argument("model_path", metavar="MODEL")
@click.argument("doc_path", metavar="DOC")
@click.option("--frames", type=int, default=36, show_default=True)
@click.option("--polar", type=float, default=90.0, show_default=True,
              help="Polar angle in degrees.")
@click.option("--radius", type=float, default=None, help="Orbit radius.")
@click.option("--target", default=None, help="Orbit target 'x,y,z'.")
@click.option("--res", type=int, default=400, show_default=True)
@click.option("-o", "--output", required=True, help="Output directory.")
def turntable(model_path, doc_path, frames, polar, radius, target, res, output):
    """Render an azimuth orbit of the deformed model to numbered PNGs."""
    model = load_model(model_path)
    doc = vio.load_document(doc_path)
    d_radius, d_target = default_orbit(model)
    t = _parse_target(target)
    paths = vrender.render_turntable(
        model, doc, output,
        frames=frames,
        polar=np.radians(polar),
        radius=radius if radius is not None else d_radius,
        target=t if t is not None else d_target,
        resolution=res,
        intrinsics=doc.intrinsics or default_intrinsics(res),
    )
    click.echo(f"wrote {len(paths)} frames to {output}")


@cli.command()
@click.argument("doc_path", metavar="DOC")
def validate(doc_path):
    """Exit 0 iff every document invariant holds."""
    doc = vio.load_document(doc_path)  # constructors run all invariants
    click.echo(f"valid: {len(doc.keypoints)} keypoints, mode {doc.blend_mode}")


@cli.command()
@click.argument("model_path", metavar="MODEL")
@click.argument("doc_path", metavar="[DOC]", required=False)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8400, show_default=True)
def serve(model_path, doc_path, host, port):
    """Start the interactive editor service."""
    import uvicorn

    from .service import create_app

    model = load_model(model_path)
    doc = vio.load_document(doc_path) if doc_path else None
    uvicorn.run(create_app(model, doc), host=host, port=port, log_level="warning")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as e:
        print(f"usage error: {e.format_message()}", file=sys.stderr)
        return EXIT_USAGE
    except click.ClickException as e:
        print(f"error: {e.format_message()}", file=sys.stderr)
        return EXIT_IO
    except click.Abort:
        return EXIT_IO
    except (ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except VdfieldError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
