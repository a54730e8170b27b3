import numpy as np
import pytest

from facefit.assets import build_toy_head
from facefit.blendmodel import BlendshapeBasis


@pytest.fixture(scope="session")
def toy_basis():
    return build_toy_head()


def make_grid_basis(side=10, n_shape=2, n_expr=2, seed=0):
    """Flat z=0 grid head stand-in: side*side vertices, CCW faces.

    Useful when a test needs exact flat-surface normals or a trivially
    spanned UV chart. Landmarks are the first 68 vertices.
    """
    if side * side < 68:
        raise ValueError("grid too small for 68 landmarks")
    ys, xs = np.mgrid[0:side, 0:side].astype(np.float64)
    verts = np.stack([xs.ravel() / (side - 1) - 0.5,
                      ys.ravel() / (side - 1) - 0.5,
                      np.zeros(side * side)], axis=1)
    faces = []
    for r in range(side - 1):
        for c in range(side - 1):
            a = r * side + c
            b = a + 1
            d = a + side
            e = d + 1
            faces.append((a, b, e))
            faces.append((a, e, d))
    uv = verts[:, :2] + 0.5
    rng = np.random.default_rng(seed)
    shape_basis = rng.normal(0, 0.01, size=(side * side, 3, n_shape))
    expr_basis = rng.normal(0, 0.01, size=(side * side, 3, n_expr))
    return BlendshapeBasis(
        template=verts, shape_basis=shape_basis, expr_basis=expr_basis,
        faces=np.array(faces), uv_coords=uv,
        landmark_indices=np.arange(68),
        jaw_region=np.array([], dtype=np.int64),
        jaw_pivot=np.zeros(3))


@pytest.fixture()
def grid_basis():
    return make_grid_basis()
