"""Full render composition: mesh -> pose -> projection -> fragments -> shading.

Coverage and barycentric weights are frozen per forward pass: the
geometry seen by the shader is a constant, and gradients flow only
through texture sampling and lighting. ``pixel_geometry`` packages that
frozen per-pixel data so the texture/light forward pass can be replayed
cheaply (and differentiably) without re-rasterizing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .blendmodel import posed_mesh, project
from .raster import FragmentBuffer, rasterize, vertex_normals
from .shading import UvTexture, interpolated_normals, interpolated_uv, sh_basis


@dataclass
class PixelGeometry:
    """Frozen per-pixel quantities for the covered pixels of one view."""

    width: int
    height: int
    fragments: FragmentBuffer
    flat_index: np.ndarray  # (M,) indices into the flattened image
    uv: np.ndarray          # (M, 2)
    sh_vals: np.ndarray     # (M, 9)
    positions: np.ndarray   # (M, 3) posed-mesh points, for feature maps
    normals: np.ndarray     # (M, 3)


@dataclass
class RenderOutput:
    image: np.ndarray      # (H, W, 3), clamped to [0, 1]
    image_raw: np.ndarray  # (H, W, 3), before the final clamp
    proj_mask: np.ndarray  # (H, W) uint8, 1 where the mesh covers
    fragments: FragmentBuffer


def pixel_geometry(basis, params, width, height, bands=1):
    """Rasterize the current state and gather per-pixel interpolants."""
    verts = posed_mesh(basis, params.s, params.e, params.pose)
    pts, dep = project(verts, params.cam_scale, params.cam_rot, params.cam_trans)
    frags = rasterize(pts, dep, basis.faces, width, height, bands=bands)
    rows, cols = np.nonzero(frags.coverage)
    fid = frags.face_id[rows, cols]
    bary = frags.bary[rows, cols]
    vn = vertex_normals(verts, basis.faces)
    uv = interpolated_uv(basis.uv_coords, basis.faces, fid, bary)
    normals = interpolated_normals(vn, basis.faces, fid, bary)
    tri = basis.faces[fid]
    positions = (verts[tri] * bary[:, :, None]).sum(axis=1)
    return PixelGeometry(
        width=width, height=height, fragments=frags,
        flat_index=rows * width + cols, uv=uv,
        sh_vals=np.asarray(sh_basis(normals)), positions=positions,
        normals=normals,
    )


def shade_pixels(pix, texture_rgb, light):
    """Shaded covered-pixel colors (M, 3); differentiable in texture/light."""
    albedo = ad.bilinear_sample(texture_rgb, pix.uv)
    irr = ad.sh_irradiance(pix.sh_vals, light)
    return ad.relu(ad.multiply(albedo, irr))


def assemble_image(pix, pixel_colors, background=0.0):
    """Scatter covered-pixel colors into a full (H, W, 3) image.

    Returns (raw, clamped); raw keeps pre-clamp values so scale
    relationships survive for analysis.
    """
    flat = ad.scatter_rows(pixel_colors, pix.flat_index,
                           pix.width * pix.height, fill=background)
    raw = ad.reshape(flat, (pix.height, pix.width, 3))
    return raw, ad.clamp01(raw)


def render(basis, params, texture, width, height, bands=1, background=0.0):
    """Render the textured, SH-lit head under the given parameters."""
    tex = texture.rgb if isinstance(texture, UvTexture) else np.asarray(texture, float)
    pix = pixel_geometry(basis, params, width, height, bands=bands)
    colors = shade_pixels(pix, tex, params.light)
    raw, image = assemble_image(pix, colors, background=background)
    return RenderOutput(
        image=image, image_raw=raw,
        proj_mask=pix.fragments.coverage.astype(np.uint8),
        fragments=pix.fragments,
    )
