"""Software triangle rasterizer with z-buffering.

Pixel centers sit at (x + 0.5, y + 0.5). Coverage uses edge functions
with winding normalized so the interior is nonnegative; pixel centers
exactly on an edge follow a top-left style rule (in x-right / y-down
coordinates an edge claims its boundary pixels when it points downward,
or leftward if exactly horizontal), so shared edges are claimed by
exactly one triangle. The nearest depth wins; exact depth ties go to the
lower face index. Zero-area triangles never cover.

Rasterization can split the image into horizontal bands processed on a
thread pool; each band owns its rows exclusively, so the output is
independent of the band count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class FragmentBuffer:
    """Per-pixel rasterization product: winning face, weights, depth."""

    width: int
    height: int
    face_id: np.ndarray   # (H, W) int32, -1 = background
    bary: np.ndarray      # (H, W, 3)
    depth: np.ndarray     # (H, W), +inf where uncovered
    coverage: np.ndarray  # (H, W) bool


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _top_left(ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


def _raster_band(pts, dep, faces, width, r0, r1, face_id, bary, zbuf):
    ys = np.arange(r0, r1, dtype=np.float64) + 0.5
    for fi in range(faces.shape[0]):
        ia, ib, ic = faces[fi]
        v = pts[[ia, ib, ic]]
        d = dep[[ia, ib, ic]]
        area2 = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - \
                (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0])
        if area2 == 0.0:
            continue
        swapped = area2 < 0.0
        if swapped:
            v = v[[0, 2, 1]]
            d = d[[0, 2, 1]]
            area2 = -area2

        px_lo = max(0, int(np.ceil(v[:, 0].min() - 0.5)))
        px_hi = min(width - 1, int(np.floor(v[:, 0].max() - 0.5)))
        py_lo = max(r0, int(np.ceil(v[:, 1].min() - 0.5)))
        py_hi = min(r1 - 1, int(np.floor(v[:, 1].max() - 0.5)))
        if px_lo > px_hi or py_lo > py_hi:
            continue

        xs = np.arange(px_lo, px_hi + 1, dtype=np.float64) + 0.5
        yb = ys[py_lo - r0:py_hi - r0 + 1]
        px = xs[None, :]
        py = yb[:, None]

        covered = None
        e_vals = []
        # edge k is opposite vertex k: (v1,v2), (v2,v0), (v0,v1)
        for a, b in ((1, 2), (2, 0), (0, 1)):
            e = _edge(v[a, 0], v[a, 1], v[b, 0], v[b, 1], px, py)
            if _top_left(v[a, 0], v[a, 1], v[b, 0], v[b, 1]):
                inside = e >= 0.0
            else:
                inside = e > 0.0
            covered = inside if covered is None else (covered & inside)
            e_vals.append(e)
        if not covered.any():
            continue

        w0 = e_vals[0] / area2
        w1 = e_vals[1] / area2
        w2 = e_vals[2] / area2
        pixz = w0 * d[0] + w1 * d[1] + w2 * d[2]

        zr = zbuf[py_lo - r0:py_hi - r0 + 1, px_lo:px_hi + 1]
        better = covered & (pixz < zr)
        if not better.any():
            continue
        fr = face_id[py_lo - r0:py_hi - r0 + 1, px_lo:px_hi + 1]
        br = bary[py_lo - r0:py_hi - r0 + 1, px_lo:px_hi + 1]
        zr[better] = pixz[better]
        fr[better] = fi
        if swapped:
            w1, w2 = w2, w1
        br[better, 0] = w0[better]
        br[better, 1] = w1[better]
        br[better, 2] = w2[better]


def rasterize(points2d, depth, faces, width, height, bands=1):
    """Rasterize triangles given projected points and per-vertex depth."""
    pts = np.asarray(points2d, dtype=np.float64)
    dep = np.asarray(depth, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if width < 1 or height < 1:
        raise InvalidArgumentError("image dimensions must be at least 1")
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidArgumentError("points2d must be (N, 2)")
    if dep.shape != (pts.shape[0],):
        raise InvalidArgumentError("depth must be (N,)")
    if faces.size and (faces.min() < 0 or faces.max() >= pts.shape[0]):
        raise InvalidArgumentError("face indices reference missing points")

    face_id = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    zbuf = np.full((height, width), np.inf, dtype=np.float64)

    bands = max(1, min(int(bands), height))
    edges = np.linspace(0, height, bands + 1).astype(int)
    ranges = [(int(edges[i]), int(edges[i + 1])) for i in range(bands)
              if edges[i + 1] > edges[i]]

    if len(ranges) == 1:
        r0, r1 = ranges[0]
        _raster_band(pts, dep, faces, width, r0, r1,
                     face_id[r0:r1], bary[r0:r1], zbuf[r0:r1])
    else:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            futs = [
                pool.submit(_raster_band, pts, dep, faces, width, r0, r1,
                            face_id[r0:r1], bary[r0:r1], zbuf[r0:r1])
                for r0, r1 in ranges
            ]
            for f in futs:
                f.result()

    return FragmentBuffer(width=width, height=height, face_id=face_id,
                          bary=bary, depth=zbuf, coverage=face_id >= 0)


def vertex_normals(vertices, faces):
    """Area-weighted vertex normals; isolated vertices get (0, 0, 1)."""
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    acc = np.zeros_like(v)
    if f.size:
        fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        np.add.at(acc, f[:, 0], fn)
        np.add.at(acc, f[:, 1], fn)
        np.add.at(acc, f[:, 2], fn)
    norm = np.sqrt((acc * acc).sum(axis=1))
    ok = norm > 0.0
    out = np.zeros_like(v)
    out[:, 2] = 1.0
    out[ok] = acc[ok] / norm[ok, None]
    return out
