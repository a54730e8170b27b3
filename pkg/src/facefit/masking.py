"""Skin-guided random patch masking and UV-space visibility accounting.

Training-time occlusions are simulated by dropping whole patch blocks of
the skin mask; at test time, texels that too few fitting views ever
touched count as invisible and are pulled toward their visible neighbors
by a visibility-weighted smoothness prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError
from .shading import UvTexture, interpolated_uv


@dataclass
class BinaryMask:
    """A {0,1} grid tagged with where it came from."""

    grid: np.ndarray
    provenance: str = "skin"  # skin | random | combined | projection

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        if not np.isin(self.grid, (0, 1)).all():
            raise InvalidArgumentError("mask values must be 0 or 1")
        self.grid = self.grid.astype(np.uint8)


def mask_grid(mask):
    return mask.grid if isinstance(mask, BinaryMask) else np.asarray(mask)


def make_patch_mask(width, height, patch=16, rho=0.25, seed=0):
    """Tile the frame with patch x patch blocks; drop each with probability rho.

    Deterministic per seed: one uniform draw per block, row-major over
    the block grid.
    """
    if not 0.0 <= rho <= 1.0:
        raise InvalidArgumentError("rho must lie in [0, 1]")
    if patch < 1:
        raise InvalidArgumentError("patch must be at least 1 pixel")
    nby = -(-height // patch)
    nbx = -(-width // patch)
    rng = np.random.default_rng(seed)
    blocks = (rng.random((nby, nbx)) >= rho).astype(np.uint8)
    grid = np.repeat(np.repeat(blocks, patch, axis=0), patch, axis=1)
    return BinaryMask(grid=grid[:height, :width], provenance="random")


def combine_mask(skin, random_mask):
    """Elementwise product M_skin * B."""
    s = mask_grid(skin)
    b = mask_grid(random_mask)
    if s.shape != b.shape:
        raise InvalidArgumentError("masks must share a shape")
    return BinaryMask(grid=s * b, provenance="combined")


def uv_visibility(fragbuffers, basis, resolution):
    """Fraction of views in which each texel was covered.

    A texel counts as visible in a view when some covered pixel's
    interpolated uv lands in it.
    """
    if len(fragbuffers) < 1:
        raise InvalidArgumentError("need at least one fragment buffer")
    R = int(resolution)
    acc = np.zeros((R, R))
    for fb in fragbuffers:
        rows, cols = np.nonzero(fb.coverage)
        if rows.size == 0:
            continue
        fid = fb.face_id[rows, cols]
        bary = fb.bary[rows, cols]
        uv = interpolated_uv(basis.uv_coords, basis.faces, fid, bary)
        j = np.clip((uv[:, 0] * R).astype(int), 0, R - 1)
        i = np.clip((uv[:, 1] * R).astype(int), 0, R - 1)
        seen = np.zeros((R, R), dtype=bool)
        seen[i, j] = True
        acc += seen
    return acc / len(fragbuffers)


def visible_texel_mask(vis, threshold=0.5):
    """Texels visible in at least ``threshold`` of the views."""
    return (np.asarray(vis) >= threshold).astype(np.uint8)


def completion_prior(texture, vis):
    """Visibility-weighted total variation over texel edges.

    Each horizontal/vertical neighbor pair contributes
    (1 - min(vis_a, vis_b)) * sum_c |t_a - t_b|, so fully visible
    regions contribute nothing and invisible texels are pulled toward
    their better-observed neighbors.
    """
    tex = texture.rgb if isinstance(texture, UvTexture) else texture
    v = np.asarray(ad.value_of(vis), dtype=np.float64)
    shape = ad.value_of(tex).shape
    if v.shape != shape[:2]:
        raise InvalidArgumentError("visibility grid must match the texture")
    w_rows = 1.0 - np.minimum(v[1:, :], v[:-1, :])
    w_cols = 1.0 - np.minimum(v[:, 1:], v[:, :-1])
    dr = ad.absolute(ad.diff_rows(tex))
    dc = ad.absolute(ad.diff_cols(tex))
    return ad.add(ad.sum_all(ad.multiply(dr, w_rows[:, :, None])),
                  ad.sum_all(ad.multiply(dc, w_cols[:, :, None])))
