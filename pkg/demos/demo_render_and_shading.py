#!/usr/bin/env python3
"""Render the textured test head under a few lighting conditions and show
what the fragment buffer holds.

Outputs PNG renders plus a coverage-mask image per lighting setup.
"""

import os

import numpy as np

from facefit import imgio
from facefit.assets import build_toy_head, procedural_texture
from facefit.blendmodel import FaceParams
from facefit.render import render
from facefit.shading import DC_IDENTITY

OUT = os.path.join(os.path.dirname(__file__), "out", "render")


def main():
    os.makedirs(OUT, exist_ok=True)
    basis = build_toy_head()
    texture = procedural_texture(256, seed=7)
    size = 128

    base = FaceParams(
        s=np.zeros(basis.n_shape), e=np.zeros(basis.n_expr),
        pose=np.array([0.05, 0.35, 0.0, -0.1, 0.0, 0.0]),
        cam_scale=42.0,
        cam_trans=np.array([size / 84.0, size / 84.0, 0.0]))

    lights = {}
    flat = np.zeros((9, 3))
    flat[0] = DC_IDENTITY
    lights["flat"] = flat

    keyed = flat.copy()
    keyed[0] *= 0.85
    keyed[1] = [0.35, 0.30, 0.22]   # brighter toward +y
    keyed[3] = [0.20, 0.18, 0.25]   # a cool fill from +x
    lights["keyed"] = keyed

    rim = flat.copy()
    rim[0] *= 0.7
    rim[6] = [0.25, 0.25, 0.30]     # band-2 term peaking along z
    lights["rim"] = rim

    for name, light in lights.items():
        params = base.copy()
        params.light = light
        out = render(basis, params, texture, size, size)
        imgio.save_png(os.path.join(OUT, f"render_{name}.png"), out.image)
        covered = int(out.proj_mask.sum())
        print(f"{name:6s}: {covered} covered pixels, mean intensity "
              f"{out.image[out.proj_mask.astype(bool)].mean():.3f}")

    out = render(basis, base, texture, size, size)
    imgio.save_mask_png(os.path.join(OUT, "coverage.png"), out.proj_mask)
    frag = out.fragments
    covered = frag.coverage
    print(f"fragment buffer: bary sums within "
          f"{np.abs(frag.bary[covered].sum(axis=1) - 1).max():.1e} of 1, "
          f"depth range {np.ptp(frag.depth[covered]):.2f}")
    print(f"wrote renders to {OUT}")


if __name__ == "__main__":
    main()
