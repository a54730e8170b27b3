"""Basis asset construction and on-disk format.

The desk-scale test head is a triply subdivided icosahedron (642
vertices, 1280 faces) squashed into a head-ish ellipsoid, with smooth
seeded sinusoidal deformation fields as shape/expression bases. Axes:
x right, y up, z toward the viewer; the "face" is the +z cap.

On-disk basis format: a directory holding raw little-endian arrays plus
a JSON manifest with their shapes.

    manifest.json     {"n_vertices": N, "n_shape": .., "n_expr": .., "n_faces": F}
    template.bin      (N, 3)   float64, row-major
    shape_basis.bin   (N, 3, n_s) float64
    expr_basis.bin    (N, 3, n_e) float64
    faces.bin         (F, 3)   uint32
    uv.bin            (N, 2)   float64
    landmarks.json    list of 68 vertex indices
    jaw.json          {"region": [indices], "pivot": [x, y, z]}

The loader accepts any sizes the manifest declares, so full-scale bases
(5023 vertices, 300 shape, 50 expression) load through the same path.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .blendmodel import BlendshapeBasis
from .errors import InvalidArgumentError
from .shading import UvTexture

HEAD_SCALE = np.array([0.78, 1.0, 0.85])


def _icosphere(subdivisions=3):
    """Unit icosphere: vertices (V, 3) and faces (F, 3)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v for v in verts]

    for _ in range(subdivisions):
        midpoint = {}

        def midpt(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                midpoint[key] = len(verts)
                verts.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpt(a, b), midpt(b, c), midpt(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    return np.array(verts), np.array(faces, dtype=np.int64)


def _smooth_field(unit_dirs, n_columns, amplitude, rng):
    """Stack of smooth sinusoidal per-vertex offset fields (N, 3, K)."""
    n = unit_dirs.shape[0]
    out = np.zeros((n, 3, n_columns))
    for k in range(n_columns):
        freq = rng.uniform(0.8, 2.6, size=3)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
        axis_amp = rng.uniform(0.4, 1.0, size=3) * amplitude
        arg = unit_dirs @ freq
        for c in range(3):
            out[:, c, k] = axis_amp[c] * np.sin(arg + phase[c])
    return out


def build_toy_head(n_shape=16, n_expr=8, seed=1234):
    """Deterministic desk-scale head basis (642 vertices)."""
    unit, faces = _icosphere(3)
    template = unit * HEAD_SCALE

    # spherical chart from the unit directions; front center at u = 0.5
    u = np.arctan2(unit[:, 0], unit[:, 2]) / (2.0 * np.pi) + 0.5
    v = 0.5 + np.arcsin(np.clip(unit[:, 1], -1.0, 1.0)) / np.pi
    uv = np.clip(np.stack([u, v], axis=1), 0.0, 1.0)

    # 68 landmarks spread over the front cap, ordered bottom-to-top
    front = np.nonzero(unit[:, 2] > 0.35)[0]
    order = np.lexsort((unit[front, 0], unit[front, 1]))
    front = front[order]
    pick = np.linspace(0, len(front) - 1, 68).round().astype(int)
    landmarks = front[pick]
    if len(np.unique(landmarks)) != 68:
        raise InvalidArgumentError("front cap too sparse for 68 landmarks")

    # lower-front region articulates as the jaw
    jaw = np.nonzero((unit[:, 1] < -0.38) & (unit[:, 2] > -0.25))[0]
    jaw_pivot = np.array([0.0, -0.30, 0.05])

    rng = np.random.default_rng(seed)
    shape_basis = _smooth_field(unit, n_shape, 0.05, rng)
    expr_basis = _smooth_field(unit, n_expr, 0.03, rng)

    return BlendshapeBasis(
        template=template, shape_basis=shape_basis, expr_basis=expr_basis,
        faces=faces, uv_coords=uv, landmark_indices=landmarks,
        jaw_region=jaw, jaw_pivot=jaw_pivot,
    )


def procedural_texture(resolution=256, seed=0, n_waves=6):
    """Smooth seeded RGB texture, values kept inside (0, 1)."""
    rng = np.random.default_rng(seed)
    uu, vv = np.meshgrid(
        (np.arange(resolution) + 0.5) / resolution,
        (np.arange(resolution) + 0.5) / resolution,
    )
    rgb = np.full((resolution, resolution, 3), 0.5)
    for c in range(3):
        for _ in range(n_waves):
            fu, fv = rng.uniform(0.5, 4.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.03, 0.09)
            rgb[:, :, c] += amp * np.sin(2.0 * np.pi * (fu * uu + fv * vv) + phase)
    return UvTexture(rgb=np.clip(rgb, 0.12, 0.88))


def save_basis(basis, dirpath):
    """Write a basis directory in the raw-array + manifest format."""
    os.makedirs(dirpath, exist_ok=True)

    def raw(name, arr, dtype):
        with open(os.path.join(dirpath, name), "wb") as fh:
            fh.write(np.ascontiguousarray(arr).astype(dtype).tobytes())

    raw("template.bin", basis.template, "<f8")
    raw("shape_basis.bin", basis.shape_basis, "<f8")
    raw("expr_basis.bin", basis.expr_basis, "<f8")
    raw("faces.bin", basis.faces, "<u4")
    raw("uv.bin", basis.uv_coords, "<f8")
    with open(os.path.join(dirpath, "landmarks.json"), "w") as fh:
        json.dump([int(i) for i in basis.landmark_indices], fh)
    with open(os.path.join(dirpath, "jaw.json"), "w") as fh:
        json.dump({"region": [int(i) for i in basis.jaw_region],
                   "pivot": [float(x) for x in basis.jaw_pivot]}, fh)
    manifest = {
        "n_vertices": int(basis.n_vertices),
        "n_shape": int(basis.n_shape),
        "n_expr": int(basis.n_expr),
        "n_faces": int(basis.faces.shape[0]),
    }
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_basis(dirpath):
    """Load a basis directory; validates shapes against the manifest."""
    man_path = os.path.join(dirpath, "manifest.json")
    if not os.path.isfile(man_path):
        raise InvalidArgumentError(f"no manifest.json in {dirpath}")
    with open(man_path) as fh:
        man = json.load(fh)
    try:
        n, ns, ne, nf = (int(man[k]) for k in
                         ("n_vertices", "n_shape", "n_expr", "n_faces"))
    except KeyError as exc:
        raise InvalidArgumentError(f"manifest missing key: {exc}") from exc

    def raw(name, dtype, shape):
        path = os.path.join(dirpath, name)
        data = np.fromfile(path, dtype=dtype)
        expect = int(np.prod(shape))
        if data.size != expect:
            raise InvalidArgumentError(
                f"{name} holds {data.size} values, manifest implies {expect}")
        return data.reshape(shape)

    with open(os.path.join(dirpath, "landmarks.json")) as fh:
        landmarks = np.array(json.load(fh), dtype=np.int64)
    with open(os.path.join(dirpath, "jaw.json")) as fh:
        jaw = json.load(fh)

    return BlendshapeBasis(
        template=raw("template.bin", "<f8", (n, 3)),
        shape_basis=raw("shape_basis.bin", "<f8", (n, 3, ns)),
        expr_basis=raw("expr_basis.bin", "<f8", (n, 3, ne)),
        faces=raw("faces.bin", "<u4", (nf, 3)).astype(np.int64),
        uv_coords=raw("uv.bin", "<f8", (n, 2)),
        landmark_indices=landmarks,
        jaw_region=np.array(jaw["region"], dtype=np.int64),
        jaw_pivot=np.array(jaw["pivot"], dtype=np.float64),
    )
