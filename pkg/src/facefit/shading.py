"""UV textures, bilinear sampling, and spherical-harmonics shading.

SH convention used throughout (order matters; it is part of the on-disk
light format): for a unit normal (x, y, z) the nine basis values are

    [ C0,
      C1*y,  C1*z,  C1*x,
      C2*x*y,  C2*y*z,  C3*(3*z^2 - 1),  C2*x*z,  C4*(x^2 - y^2) ]

with C0 = 1/(2*sqrt(pi)), C1 = sqrt(3/(4*pi)), C2 = sqrt(15/(4*pi)),
C3 = sqrt(5/(16*pi)), C4 = sqrt(15/(16*pi)). Any consistent real order-2
basis works; this one is pinned so light coefficients are portable.

Shaded values are clamped below at zero; the [0, 1] image clamp happens
only at final image assembly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = 1.0925484305920792
SH_C3 = 0.31539156525252005
SH_C4 = 0.5462742152960396

# DC-only white light of this magnitude makes shading the identity
DC_IDENTITY = 1.0 / SH_C0


@dataclass
class UvTexture:
    """Square power-of-two RGB grid with values in [0, 1]."""

    rgb: np.ndarray  # (R, R, 3)

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3 or \
                self.rgb.shape[0] != self.rgb.shape[1]:
            raise InvalidArgumentError("texture must be (R, R, 3)")
        r = self.rgb.shape[0]
        if r < 1 or (r & (r - 1)) != 0:
            raise InvalidArgumentError("texture side must be a power of two")
        self.rgb = np.clip(self.rgb, 0.0, 1.0)

    @property
    def resolution(self):
        return self.rgb.shape[0]

    @classmethod
    def constant(cls, resolution, value=0.5):
        rgb = np.full((resolution, resolution, 3), np.float64(value))
        return cls(rgb=rgb)


def uv_sample(texture, uv):
    """Bilinear sample with edge clamp; exact at texel centers.

    ``texture`` may be a UvTexture, an (R, R, 3) ndarray, or a tape Var;
    ``uv`` is one (2,) point or an (M, 2) batch.
    """
    tex = texture.rgb if isinstance(texture, UvTexture) else texture
    uv = np.asarray(uv, dtype=np.float64)
    single = uv.ndim == 1
    pts = uv[None, :] if single else uv
    out = ad.bilinear_sample(tex, pts)
    if single:
        return out.value[0] if ad.is_var(out) else out[0]
    return out


def sh_basis(normals):
    """Nine real SH basis values per normal; works on ndarray or Var."""
    x = ad.take_column(normals, 0)
    y = ad.take_column(normals, 1)
    z = ad.take_column(normals, 2)
    one = x * 0.0 + 1.0
    return ad.stack_columns([
        SH_C0 * one,
        SH_C1 * y,
        SH_C1 * z,
        SH_C1 * x,
        SH_C2 * x * y,
        SH_C2 * y * z,
        SH_C3 * (z * z * 3.0 - 1.0),
        SH_C2 * x * z,
        SH_C4 * (x * x - y * y),
    ])


def sh_shade(albedo, normal, light):
    """albedo * (SH basis of normal . light), clamped below at zero.

    Accepts single (3,) inputs or (M, 3) batches for albedo/normal.
    """
    alb = albedo if ad.is_var(albedo) else np.asarray(albedo, dtype=np.float64)
    nrm = normal if ad.is_var(normal) else np.asarray(normal, dtype=np.float64)
    single = ad.value_of(nrm).ndim == 1
    if single:
        nrm = ad.reshape(nrm, (1, 3))
        alb = ad.reshape(alb, (1, 3))
    nval = ad.value_of(nrm)
    lens = np.sqrt((nval * nval).sum(axis=1))
    if np.abs(lens - 1.0).max() > 1e-6:
        raise InvalidArgumentError("normals must be unit length")
    basis = sh_basis(nrm)
    irr = ad.sh_irradiance(basis, light)
    out = ad.relu(ad.multiply(alb, irr))
    if single:
        out = ad.reshape(out, (3,))
    return out


def interpolated_normals(vertex_normals_arr, faces, face_id, bary):
    """Barycentric normal interpolation with renormalization.

    face_id, bary are per-fragment arrays (M,), (M, 3). Degenerate
    interpolations fall back to (0, 0, 1).
    """
    tri = faces[face_id]
    n = (vertex_normals_arr[tri] * bary[:, :, None]).sum(axis=1)
    norm = np.sqrt((n * n).sum(axis=1))
    ok = norm > 0.0
    out = np.zeros_like(n)
    out[:, 2] = 1.0
    out[ok] = n[ok] / norm[ok, None]
    return out


def interpolated_uv(uv_coords, faces, face_id, bary):
    tri = faces[face_id]
    return (uv_coords[tri] * bary[:, :, None]).sum(axis=1)
