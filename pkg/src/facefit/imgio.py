"""Image, mask, landmark, raw-array, and Wavefront OBJ input/output.

Raw dumps are little-endian float64 with a JSON sidecar recording the
shape, so test comparisons can be bit-exact. PNG output is 8-bit with
round-half-away quantization of [0, 1] values.
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from .errors import InvalidArgumentError


def quantize_u8(image):
    return (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def save_png(path, image):
    """Save a [0,1] float image, (H, W, 3) color or (H, W) grayscale."""
    arr = quantize_u8(np.asarray(image, dtype=np.float64))
    Image.fromarray(arr).save(path, format="PNG")


def load_png(path):
    """Load a PNG as (H, W, 3) float in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_mask_png(path, mask):
    """Binary mask to single-channel PNG (0 / 255)."""
    m = (np.asarray(mask) > 0).astype(np.uint8) * 255
    Image.fromarray(m, mode="L").save(path, format="PNG")


def load_mask_png(path):
    """Single-channel PNG to a {0,1} mask; values >= 128 map to 1."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= 128).astype(np.uint8)


def save_raw(path, array):
    """Write <f8 bytes plus a .json shape sidecar next to the file."""
    arr = np.ascontiguousarray(array, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())
    with open(_sidecar(path), "w") as fh:
        json.dump({"shape": list(arr.shape), "dtype": "<f8", "order": "C"}, fh)


def load_raw(path):
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    data = np.fromfile(path, dtype=meta["dtype"])
    return data.reshape(meta["shape"])


def _sidecar(path):
    base, _ = os.path.splitext(path)
    return base + ".json"


def save_landmarks_json(path, landmarks):
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.shape != (68, 2):
        raise InvalidArgumentError("landmarks must be 68 [x, y] pairs")
    with open(path, "w") as fh:
        json.dump([[float(x), float(y)] for x, y in pts], fh)


def load_landmarks_json(path):
    with open(path) as fh:
        data = json.load(fh)
    pts = np.asarray(data, dtype=np.float64)
    if pts.shape != (68, 2):
        raise InvalidArgumentError(f"{path}: landmarks must be 68 [x, y] pairs")
    return pts


def save_obj(path, vertices, uv_coords, faces):
    """Triangle mesh with per-vertex UVs as v/vt/f lines.

    Vertex i and UV i pair up, so face entries use matching v/vt indices
    (1-based). Floats print with 17 significant digits and round-trip
    exactly.
    """
    v = np.asarray(vertices, dtype=np.float64)
    vt = np.asarray(uv_coords, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if v.ndim != 2 or v.shape[1] != 3 or vt.shape != (v.shape[0], 2):
        raise InvalidArgumentError("vertices must be (N, 3) with (N, 2) uvs")
    lines = []
    for x, y, z in v:
        lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
    for u, w in vt:
        lines.append(f"vt {u:.17g} {w:.17g}")
    for a, b, c in f + 1:
        lines.append(f"f {a}/{a} {b}/{b} {c}/{c}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_obj(path):
    """Read v/vt/f lines written by save_obj; returns (v, vt, faces)."""
    verts, uvs, faces = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return (np.array(verts, dtype=np.float64),
            np.array(uvs, dtype=np.float64),
            np.array(faces, dtype=np.int64))
