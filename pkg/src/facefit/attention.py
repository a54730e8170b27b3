"""Cross-attention fusion of texture tokens with geometry tokens.

The fused output takes its attention values from the texture tokens:
f_A = softmax(f_T f_G^T / sqrt(d_T)) f_T. Pulling values from the
guidance matrix instead is available behind a flag but off by default.
There are no learned projections; token matrices attend as-is.

``patch_tokens`` turns any (H, W, C) feature map into an (n, d) token
matrix: the image splits into a grid of patches, each patch flattens and
is reduced to d orthonormal-DCT coefficients. The DCT is a fixed,
deterministic reduction, so token matrices from maps with different
channel counts land in a shared width without trained weights.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError


def attention_weights(f_t, f_g, d_t=None):
    """Row-stochastic attention matrix between token sets."""
    tv, gv = ad.value_of(f_t), ad.value_of(f_g)
    if tv.ndim != 2 or tv.shape != gv.shape:
        raise InvalidArgumentError(
            f"token matrices must share an (n, d) shape, got {tv.shape} vs {gv.shape}")
    if d_t is None:
        d_t = tv.shape[1]
    if not d_t > 0:
        raise InvalidArgumentError("attention scale must be positive")
    scores = ad.divide(ad.matmul(f_t, ad.transpose(f_g)), float(np.sqrt(d_t)))
    return ad.softmax_rows(scores)


def cross_attend(f_t, f_g, d_t=None, values_from_guidance=False):
    """Attention-fused token matrix, same (n, d) shape as the inputs."""
    w = attention_weights(f_t, f_g, d_t=d_t)
    values = f_g if values_from_guidance else f_t
    return ad.matmul(w, values)


def attention_backward(f_t, f_g, upstream, d_t=None):
    """Exact reverse-mode gradients of <upstream, f_A> w.r.t. both inputs."""
    up = np.asarray(upstream, dtype=np.float64)
    tape = ad.Tape()
    vt = tape.leaf(ad.value_of(f_t), "f_t")
    vg = tape.leaf(ad.value_of(f_g), "f_g")
    fa = cross_attend(vt, vg, d_t=d_t)
    if up.shape != fa.value.shape:
        raise InvalidArgumentError("upstream gradient shape mismatch")
    loss = ad.sum_all(ad.multiply(fa, up))
    grads = tape.backward(loss)
    return grads["f_t"], grads["f_g"]


def _dct_rows(n):
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * m + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0, :] = np.sqrt(1.0 / n)
    return mat


def patch_tokens(feature_map, grid=4, dim=32):
    """Token matrix (grid*grid, dim) from an (H, W, C) feature map."""
    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim == 2:
        fm = fm[:, :, None]
    tokens = []
    for rows in np.array_split(fm, grid, axis=0):
        for patch in np.array_split(rows, grid, axis=1):
            vec = patch.reshape(-1)
            basis = _dct_rows(vec.size)
            coeffs = basis[: min(dim, vec.size)] @ vec
            if coeffs.size < dim:
                coeffs = np.concatenate([coeffs, np.zeros(dim - coeffs.size)])
            tokens.append(coeffs)
    return np.stack(tokens, axis=0)


def geometry_feature_map(pix):
    """(H, W, 6) map of interpolated positions and normals for guidance.

    Positions min-max normalize over covered pixels; normals map from
    [-1, 1] to [0, 1]; background stays zero.
    """
    out = np.zeros((pix.height, pix.width, 6))
    if pix.flat_index.size == 0:
        return out
    pos = pix.positions
    lo = pos.min(axis=0)
    span = pos.max(axis=0) - lo
    span[span == 0.0] = 1.0
    rows, cols = np.divmod(pix.flat_index, pix.width)
    out[rows, cols, :3] = (pos - lo) / span
    out[rows, cols, 3:] = (pix.normals + 1.0) * 0.5
    return out
