"""From a rendered model to a deformable 2D rig.

Renders a blob of Gaussians from an orbit camera, extracts the
silhouette contour from the binary mask, and triangulates the interior
into a quality-bounded rig mesh.  Prints the mesh quality numbers and
writes the mask plus a wireframe overlay next to this script.
"""

import os

import numpy as np

from vdfield import CameraIntrinsics, SplatModel, Viewpoint, pose_from_viewpoint
from vdfield.mesh2d import TriangulationParams, extract_silhouette, triangulate
from vdfield.render import render_mask, write_pgm, write_png
from vdfield.triangulate import triangle_areas, triangle_min_angles

OUT = os.path.join(os.path.dirname(__file__), "out")
RES = 400


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = np.random.default_rng(3)

    n = 400
    means = rng.normal(0.0, 0.3, (n, 3))
    A = rng.normal(0.0, 0.05, (n, 3, 3))
    covs = A @ A.transpose(0, 2, 1) + 1e-4 * np.eye(3)
    model = SplatModel(means, covs, np.full(n, 0.9), rng.uniform(0, 1, (n, 3)))

    intr = CameraIntrinsics(RES, RES, RES / 2, RES / 2, RES, RES)
    pose = pose_from_viewpoint(Viewpoint(0.4, np.pi / 2), 3.0, np.zeros(3), intr)

    mask = render_mask(model, pose, resolution=RES)
    write_pgm(mask, os.path.join(OUT, "silhouette_mask.pgm"))
    print(f"mask: {mask.sum()} foreground pixels")

    boundary = extract_silhouette(mask)
    print(f"silhouette: {len(boundary)} loop(s), "
          f"{sum(len(b) for b in boundary)} contour vertices")

    params = TriangulationParams(min_angle=32.5, max_area=20.0)
    rig = triangulate(boundary, params)
    angles = np.rad2deg(triangle_min_angles(rig.rest_vertices, rig.faces))
    areas = triangle_areas(rig.rest_vertices, rig.faces)
    print(f"rig: {len(rig.rest_vertices)} vertices, {len(rig.faces)} faces")
    print(f"  min angle {angles.min():.2f} deg (bound {params.min_angle}, "
          f"sharp-corner triangles exempt)")
    print(f"  max area  {areas.max():.2f} px^2 (bound {params.max_area})")

    # wireframe overlay for eyeballing
    img = np.zeros((RES, RES, 4), dtype=np.uint8)
    img[mask] = (40, 40, 40, 255)
    for f in rig.faces:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            p, q = rig.rest_vertices[f[a]], rig.rest_vertices[f[b]]
            t = np.linspace(0, 1, int(np.linalg.norm(q - p)) + 2)[:, None]
            xy = np.round(p + t * (q - p)).astype(int)
            ok = (xy[:, 0] >= 0) & (xy[:, 0] < RES) & (xy[:, 1] >= 0) & (xy[:, 1] < RES)
            img[xy[ok, 1], xy[ok, 0]] = (90, 200, 90, 255)
    write_png(img, os.path.join(OUT, "silhouette_rig.png"))
    print(f"wrote {OUT}/silhouette_mask.pgm and {OUT}/silhouette_rig.png")


if __name__ == "__main__":
    main()
