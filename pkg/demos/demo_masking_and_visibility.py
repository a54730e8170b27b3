#!/usr/bin/env python3
"""Show the occlusion-simulation masks and UV visibility accounting:
random patch drops over the skin mask, per-texel visibility across
views, and the completion prior that smooths unseen texture regions.
"""

import os

import numpy as np

from facefit import imgio
from facefit.assets import build_toy_head
from facefit.masking import (combine_mask, completion_prior, make_patch_mask,
                             uv_visibility, visible_texel_mask)
from facefit.pipeline import synth_target
from facefit.refinement import PoseSample, pose_axis_angle
from facefit.render import pixel_geometry

OUT = os.path.join(os.path.dirname(__file__), "out", "masking")


def main():
    os.makedirs(OUT, exist_ok=True)
    basis = build_toy_head()
    tgt = synth_target(basis, seed=2, width=64, height=64, texture_res=128)

    patch = make_patch_mask(64, 64, patch=16, rho=0.25, seed=11)
    combined = combine_mask(tgt.skin_mask, patch)
    imgio.save_mask_png(os.path.join(OUT, "skin.png"), tgt.skin_mask)
    imgio.save_mask_png(os.path.join(OUT, "patches.png"), patch.grid)
    imgio.save_mask_png(os.path.join(OUT, "training_mask.png"), combined.grid)
    print(f"skin pixels {int(tgt.skin_mask.sum())}, after patch drops "
          f"{int(combined.grid.sum())} "
          f"(rho=0.25 removed {1 - combined.grid.sum() / tgt.skin_mask.sum():.0%})")

    # visibility across the base view plus two rotated views
    views = [pixel_geometry(basis, tgt.params, 64, 64).fragments]
    for yaw in (-0.5, 0.5):
        p = tgt.params.copy()
        p.pose = tgt.params.pose.copy()
        p.pose[:3] = pose_axis_angle(PoseSample(yaw, 0.0, 0.0))
        views.append(pixel_geometry(basis, p, 64, 64).fragments)
    vis = uv_visibility(views, basis, 128)
    imgio.save_png(os.path.join(OUT, "uv_visibility.png"),
                   np.repeat(vis[:, :, None], 3, axis=2))
    invisible = 1.0 - visible_texel_mask(vis).mean()
    print(f"texels visible in no view: {(vis == 0).mean():.0%}, "
          f"below the half-of-views threshold: {invisible:.0%}")

    # the completion prior only reacts where visibility is imperfect
    smooth = np.full((128, 128, 3), 0.5)
    noisy = smooth + np.random.default_rng(0).normal(0, 0.1, smooth.shape)
    print(f"prior on constant texture: {float(completion_prior(smooth, vis)):.3f}")
    print(f"prior on noisy texture:    {float(completion_prior(noisy, vis)):.1f}")
    print(f"prior with full visibility: "
          f"{float(completion_prior(noisy, np.ones((128, 128)))):.1f}")
    print(f"wrote mask imagery to {OUT}")


if __name__ == "__main__":
    main()
