"""The six fitting losses and their weighted combination.

All functions are generic over ndarrays and tape variables. Masked image
losses are normalized by the masked pixel count (times channels) so the
magnitudes are resolution-independent; weights default to 1 so the total
matches the plain sum of the parts.

The identity embedding is a deterministic stand-in for a pretrained face
recognizer: 2D DCT coefficients (DC excluded) of a 16x16 grayscale
area-downsample, zero-padded to the conventional 512-wide embedding so
downstream code sees a familiar feature size. Cosine similarity on it is
differentiable and invariant to global image brightness scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import DegenerateInputError, InvalidArgumentError
from .render import assemble_image, pixel_geometry, render, shade_pixels
from .shading import UvTexture

EMBED_DIM = 512
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class LossWeights:
    w_lmk: float = 1.0
    w_tex: float = 1.0
    w_vis_tex: float = 1.0
    w_id: float = 1.0
    w_reg: float = 1.0
    w_vis: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0.0:
                raise InvalidArgumentError(f"{f.name} must be nonnegative")

    def to_dict(self):
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def landmark_loss(predicted, target):
    """Mean over landmarks of the per-point L1 distance."""
    pv, tv = ad.value_of(predicted), ad.value_of(target)
    if pv.shape != tv.shape or pv.ndim != 2 or pv.shape[1] != 2:
        raise InvalidArgumentError("landmark arrays must both be (n, 2)")
    if np.isnan(pv).any() or np.isnan(tv).any():
        raise InvalidArgumentError("landmark arrays must not contain NaN")
    n = pv.shape[0]
    return ad.divide(ad.sum_all(ad.absolute(ad.subtract(predicted, target))), float(n))


def reg_loss(s, e):
    """Squared Euclidean norms of the shape and expression coefficients."""
    return ad.add(ad.sum_all(ad.multiply(s, s)), ad.sum_all(ad.multiply(e, e)))


def texture_loss(image_input, image_render, mask):
    """Masked L1 between images, divided by 3x the masked pixel count."""
    iv, rv = ad.value_of(image_input), ad.value_of(image_render)
    m = np.asarray(ad.value_of(mask), dtype=np.float64)
    if iv.shape != rv.shape:
        raise InvalidArgumentError("images must share a shape")
    if m.shape != iv.shape[:2]:
        raise InvalidArgumentError("mask must match the image grid")
    if not np.isin(m, (0.0, 1.0)).all():
        raise InvalidArgumentError("mask must be binary")
    count = m.sum()
    masked = ad.multiply(ad.absolute(ad.subtract(image_input, image_render)),
                         m[:, :, None])
    return ad.divide(ad.sum_all(masked), 3.0 * max(count, 1.0))


def vis_texture_loss(image_input, basis, texture, params, poses, masks,
                     light=None, targets=None, bands=1):
    """Mean masked-L1 render loss over k views.

    Views whose pose equals the base pose compare against the input
    image; other views compare against ``targets[i]`` when provided, else
    against a detached re-render of the current state under that pose
    (a self-consistency target). ``texture`` / ``light`` may be tape
    variables; geometry stays frozen per view.
    """
    if len(poses) < 1:
        raise InvalidArgumentError("need at least one view")
    if len(masks) != len(poses):
        raise InvalidArgumentError("poses and masks must pair up")
    if targets is not None and len(targets) != len(poses):
        raise InvalidArgumentError("targets must pair up with poses")

    tex = texture.rgb if isinstance(texture, UvTexture) else texture
    lgt = params.light if light is None else light
    height, width = ad.value_of(image_input).shape[:2]

    total = None
    for i, pose in enumerate(poses):
        view = params.copy()
        view.pose = np.asarray(pose, dtype=np.float64)
        view.validate()
        if targets is not None:
            target = targets[i]
        elif np.array_equal(view.pose, params.pose):
            target = image_input
        else:
            detached = view.copy()
            detached.light = ad.value_of(lgt)
            target = render(basis, detached, ad.value_of(tex),
                            width, height, bands=bands).image
        pix = pixel_geometry(basis, view, width, height, bands=bands)
        colors = shade_pixels(pix, tex, lgt)
        _, image = assemble_image(pix, colors)
        term = texture_loss(target, image, masks[i])
        total = term if total is None else ad.add(total, term)
    return ad.divide(total, float(len(poses)))


def _pool_matrix(n_in, n_out):
    """Area-average pooling matrix (n_out, n_in); rows sum to 1."""
    mat = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for i in range(n_out):
        lo, hi = i * ratio, (i + 1) * ratio
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                mat[i, j] = overlap / ratio
    return mat


def _dct_matrix(n):
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * m + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0, :] = np.sqrt(1.0 / n)
    return mat


_DCT16 = _dct_matrix(16)
_NON_DC = np.arange(1, 256)


def dct_embedding(image, grid=16):
    """Deterministic image embedding: non-DC 2D DCT of a grayscale
    downsample, zero-padded to EMBED_DIM."""
    h, w = ad.value_of(image).shape[:2]
    flat = ad.reshape(image, (h * w, 3))
    gray = ad.reshape(ad.matmul(flat, _LUMA[:, None]), (h, w))
    pooled = ad.matmul(ad.matmul(_pool_matrix(h, grid), gray),
                       _pool_matrix(w, grid).T)
    coeffs = ad.matmul(ad.matmul(_DCT16, pooled), _DCT16.T)
    feats = ad.gather_rows(ad.reshape(coeffs, (grid * grid,)), _NON_DC)
    return ad.scatter_rows(feats, np.arange(grid * grid - 1), EMBED_DIM, fill=0.0)


def identity_loss(embed, image_input, image_render):
    """1 - cosine similarity between embeddings of the two images."""
    a = embed(image_input)
    b = embed(image_render)
    sa = ad.sum_all(ad.multiply(a, a))
    sb = ad.sum_all(ad.multiply(b, b))
    if float(ad.value_of(sa)) < 1e-18 or float(ad.value_of(sb)) < 1e-18:
        raise DegenerateInputError("zero-norm embedding")
    # sqrt of the product (not product of sqrts): identical embeddings
    # then give cos = s / sqrt(s*s) = 1 exactly, and relu guards the
    # subtraction against rounding past 1
    denom = ad.sqrt(ad.multiply(sa, sb))
    cos = ad.divide(ad.sum_all(ad.multiply(a, b)), denom)
    return ad.relu(ad.subtract(1.0, cos))


def visibility_loss(proj_mask, skin_mask):
    """Mean absolute difference between the projection and skin masks."""
    pv = np.asarray(ad.value_of(proj_mask), dtype=np.float64)
    sv = np.asarray(ad.value_of(skin_mask), dtype=np.float64)
    if pv.shape != sv.shape:
        raise InvalidArgumentError("masks must share a shape")
    return ad.mean_all(ad.absolute(ad.subtract(
        pv if not ad.is_var(proj_mask) else proj_mask,
        sv if not ad.is_var(skin_mask) else skin_mask)))


LOSS_KEYS = ("lmk", "tex", "vis_tex", "id", "reg", "vis")


def total_loss(parts, weights=None):
    """Weighted sum of the six parts; missing parts count as zero."""
    w = weights or LossWeights()
    wmap = {"lmk": w.w_lmk, "tex": w.w_tex, "vis_tex": w.w_vis_tex,
            "id": w.w_id, "reg": w.w_reg, "vis": w.w_vis}
    total = None
    for key in LOSS_KEYS:
        part = parts.get(key)
        if part is None:
            continue
        if not ad.is_var(part) and not np.isfinite(ad.value_of(part)).all():
            raise InvalidArgumentError(f"loss part {key!r} is not finite")
        term = ad.multiply(wmap[key], part)
        total = term if total is None else ad.add(total, term)
    if total is None:
        return np.float64(0.0)
    return total
