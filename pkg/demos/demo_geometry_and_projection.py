#!/usr/bin/env python3
"""Walk through the geometry stack: blendshape reconstruction, jaw/global
pose, weak-perspective projection, and landmark selection.

Writes a few pose variations of the test head as OBJ files plus the
projected landmark layout, so the coordinate conventions are easy to
inspect in a mesh viewer.
"""

import os

import numpy as np

from facefit import imgio
from facefit.assets import build_toy_head
from facefit.blendmodel import (apply_pose, project, reconstruct_mesh,
                                select_landmarks)

OUT = os.path.join(os.path.dirname(__file__), "out", "geometry")


def main():
    os.makedirs(OUT, exist_ok=True)
    basis = build_toy_head()
    print(f"test head: {basis.n_vertices} vertices, "
          f"{basis.faces.shape[0]} faces, {basis.n_shape} shape / "
          f"{basis.n_expr} expression components")

    rng = np.random.default_rng(0)
    s = rng.uniform(-0.8, 0.8, size=basis.n_shape)
    e = rng.uniform(-0.6, 0.6, size=basis.n_expr)
    mesh = reconstruct_mesh(basis, s, e)
    print(f"random coefficients move vertices by up to "
          f"{np.abs(mesh - basis.template).max():.3f} model units")

    poses = {
        "neutral": np.zeros(6),
        "yaw_left": np.array([0.0, 0.6, 0.0, 0.0, 0.0, 0.0]),
        "jaw_open": np.array([0.0, 0.0, 0.0, -0.35, 0.0, 0.0]),
    }
    for name, pose in poses.items():
        posed = apply_pose(mesh, pose, basis)
        path = os.path.join(OUT, f"head_{name}.obj")
        imgio.save_obj(path, posed, basis.uv_coords, basis.faces)
        print(f"wrote {path}")

    # project the neutral head into a 64 px frame and dump the landmarks
    scale = 22.0
    trans = np.array([64 / (2 * scale), 64 / (2 * scale), 0.0])
    marks3d = select_landmarks(apply_pose(mesh, poses["neutral"], basis), basis)
    pts, depth = project(marks3d, scale, np.zeros(3), trans)
    imgio.save_landmarks_json(os.path.join(OUT, "landmarks_64px.json"), pts)
    print(f"landmark spread in a 64 px frame: x {pts[:, 0].min():.1f}.."
          f"{pts[:, 0].max():.1f}, y {pts[:, 1].min():.1f}.."
          f"{pts[:, 1].max():.1f}, depth range {np.ptp(depth):.2f}")


if __name__ == "__main__":
    main()
