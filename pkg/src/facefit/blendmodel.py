"""Linear blendshape head geometry, pose articulation, and projection.

Geometry is a template plus linear shape/expression offsets. Pose is a
6-vector: entries 0..2 rotate the whole head (axis-angle, about the
template centroid), entries 3..5 rotate the jaw region rigidly about the
jaw pivot. The camera is weak-perspective: rigid transform, drop z,
multiply by a global scale; the post-transform z is kept as depth for
z-buffering and is deliberately not scaled.

All operations accept either plain ndarrays or tape variables, so the
same code serves evaluation and gradient-based fitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError

GLOBAL_POSE = np.array([0, 1, 2])
JAW_POSE = np.array([3, 4, 5])


@dataclass
class BlendshapeBasis:
    """Immutable geometry assets: template, bases, topology, UV chart."""

    template: np.ndarray          # (N, 3)
    shape_basis: np.ndarray       # (N, 3, n_s)
    expr_basis: np.ndarray        # (N, 3, n_e)
    faces: np.ndarray             # (F, 3) vertex indices
    uv_coords: np.ndarray         # (N, 2) in [0, 1]
    landmark_indices: np.ndarray  # (68,)
    jaw_region: np.ndarray        # vertex indices
    jaw_pivot: np.ndarray         # (3,)

    def __post_init__(self):
        self.template = np.array(self.template, dtype=np.float64)
        self.shape_basis = np.array(self.shape_basis, dtype=np.float64)
        self.expr_basis = np.array(self.expr_basis, dtype=np.float64)
        self.faces = np.array(self.faces, dtype=np.int64)
        self.uv_coords = np.array(self.uv_coords, dtype=np.float64)
        self.landmark_indices = np.array(self.landmark_indices, dtype=np.int64)
        self.jaw_region = np.array(self.jaw_region, dtype=np.int64)
        self.jaw_pivot = np.array(self.jaw_pivot, dtype=np.float64)
        self._validate()
        # immutable after construction; shared freely across threads
        for name in ("template", "shape_basis", "expr_basis", "faces",
                     "uv_coords", "landmark_indices", "jaw_region",
                     "jaw_pivot"):
            getattr(self, name).setflags(write=False)

    def _validate(self):
        n = self.template.shape[0]
        if self.template.ndim != 2 or self.template.shape[1] != 3:
            raise InvalidArgumentError("template must be (N, 3)")
        if self.shape_basis.shape[:2] != (n, 3) or self.shape_basis.ndim != 3:
            raise InvalidArgumentError("shape_basis must be (N, 3, n_s)")
        if self.expr_basis.shape[:2] != (n, 3) or self.expr_basis.ndim != 3:
            raise InvalidArgumentError("expr_basis must be (N, 3, n_e)")
        if self.shape_basis.shape[2] < 1 or self.expr_basis.shape[2] < 1:
            raise InvalidArgumentError("bases need at least one column")
        if not (np.isfinite(self.shape_basis).all() and np.isfinite(self.expr_basis).all()
                and np.isfinite(self.template).all()):
            raise InvalidArgumentError("basis arrays must be finite")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise InvalidArgumentError("faces must be (F, 3)")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise InvalidArgumentError("face indices out of range")
        if self.uv_coords.shape != (n, 2):
            raise InvalidArgumentError("uv_coords must be (N, 2)")
        if self.uv_coords.min() < 0.0 or self.uv_coords.max() > 1.0:
            raise InvalidArgumentError("uv coordinates must lie in [0, 1]")
        if self.landmark_indices.shape != (68,):
            raise InvalidArgumentError("landmark_indices must hold 68 entries")
        if len(np.unique(self.landmark_indices)) != 68:
            raise InvalidArgumentError("landmark indices must be distinct")
        if self.landmark_indices.min() < 0 or self.landmark_indices.max() >= n:
            raise InvalidArgumentError("landmark index out of range")
        if self.jaw_region.size and (self.jaw_region.min() < 0 or self.jaw_region.max() >= n):
            raise InvalidArgumentError("jaw region index out of range")
        if self.jaw_pivot.shape != (3,):
            raise InvalidArgumentError("jaw_pivot must be a 3-vector")

    @property
    def n_vertices(self):
        return self.template.shape[0]

    @property
    def n_shape(self):
        return self.shape_basis.shape[2]

    @property
    def n_expr(self):
        return self.expr_basis.shape[2]

    @property
    def centroid(self):
        return self.template.mean(axis=0)


@dataclass
class FaceParams:
    """Per-image state: coefficients, pose, camera, and lighting."""

    s: np.ndarray                          # (n_s,)
    e: np.ndarray                          # (n_e,)
    pose: np.ndarray = field(default_factory=lambda: np.zeros(6))
    cam_scale: float = 1.0
    cam_rot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cam_trans: np.ndarray = field(default_factory=lambda: np.zeros(3))
    light: np.ndarray = field(default_factory=lambda: np.zeros((9, 3)))

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        self.e = np.asarray(self.e, dtype=np.float64)
        self.pose = np.asarray(self.pose, dtype=np.float64)
        self.cam_scale = float(self.cam_scale)
        self.cam_rot = np.asarray(self.cam_rot, dtype=np.float64)
        self.cam_trans = np.asarray(self.cam_trans, dtype=np.float64)
        self.light = np.asarray(self.light, dtype=np.float64)
        self.validate()

    def validate(self):
        if self.pose.shape != (6,):
            raise InvalidArgumentError("pose must be a 6-vector")
        if self.cam_rot.shape != (3,) or self.cam_trans.shape != (3,):
            raise InvalidArgumentError("camera rotation/translation must be 3-vectors")
        if self.light.shape != (9, 3):
            raise InvalidArgumentError("light must be a 9x3 SH coefficient matrix")
        if not self.cam_scale > 0.0:
            raise InvalidArgumentError("cam_scale must be positive")
        for arr in (self.s, self.e, self.pose, self.cam_rot, self.cam_trans, self.light):
            if not np.isfinite(arr).all():
                raise InvalidArgumentError("parameters must be finite")
        if np.linalg.norm(self.pose[:3]) >= np.pi or np.linalg.norm(self.pose[3:]) >= np.pi:
            raise InvalidArgumentError("pose rotation angles must stay below pi")
        if np.linalg.norm(self.cam_rot) >= np.pi:
            raise InvalidArgumentError("camera rotation angle must stay below pi")

    def copy(self):
        return replace(
            self,
            s=self.s.copy(), e=self.e.copy(), pose=self.pose.copy(),
            cam_rot=self.cam_rot.copy(), cam_trans=self.cam_trans.copy(),
            light=self.light.copy(),
        )

    def to_dict(self):
        return {
            "s": self.s.tolist(),
            "e": self.e.tolist(),
            "pose": self.pose.tolist(),
            "cam_scale": self.cam_scale,
            "cam_rot": self.cam_rot.tolist(),
            "cam_trans": self.cam_trans.tolist(),
            "light": self.light.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            s=np.array(d["s"], dtype=np.float64),
            e=np.array(d["e"], dtype=np.float64),
            pose=np.array(d["pose"], dtype=np.float64),
            cam_scale=float(d["cam_scale"]),
            cam_rot=np.array(d["cam_rot"], dtype=np.float64),
            cam_trans=np.array(d["cam_trans"], dtype=np.float64),
            light=np.array(d["light"], dtype=np.float64),
        )


def reconstruct_mesh(basis, s, e):
    """Template + shape and expression offsets; linear in (s, e)."""
    if ad.value_of(s).shape != (basis.n_shape,):
        raise InvalidArgumentError(
            f"shape coefficients must have length {basis.n_shape}")
    if ad.value_of(e).shape != (basis.n_expr,):
        raise InvalidArgumentError(
            f"expression coefficients must have length {basis.n_expr}")
    offs = ad.basis_combine(basis.shape_basis, s)
    offe = ad.basis_combine(basis.expr_basis, e)
    return ad.add(basis.template, ad.add(offs, offe))


def apply_pose(vertices, pose, basis):
    """Jaw rotation about the jaw pivot, then global rotation about the
    template centroid. Vertices outside the jaw region see only the
    global component."""
    if not np.isfinite(ad.value_of(pose)).all():
        raise InvalidArgumentError("pose must be finite")
    glob = ad.gather_rows(pose, GLOBAL_POSE)
    jaw = ad.gather_rows(pose, JAW_POSE)
    if basis.jaw_region.size:
        jaw_verts = ad.gather_rows(vertices, basis.jaw_region)
        jaw_rot = ad.rodrigues_rotate(jaw_verts, jaw, pivot=basis.jaw_pivot)
        vertices = ad.row_replace(vertices, jaw_rot, basis.jaw_region)
    return ad.rodrigues_rotate(vertices, glob, pivot=basis.centroid)


def project(vertices, cam_scale, cam_rot, cam_trans):
    """Weak-perspective projection.

    Returns (points, depth): points = cam_scale * (R v + t).xy, and depth
    is the z component after the rigid transform (unscaled, for z-buffering).
    """
    if not ad.is_var(cam_scale) and not float(ad.value_of(cam_scale)) > 0.0:
        raise InvalidArgumentError("cam_scale must be positive")
    if ad.is_var(cam_scale) and not float(cam_scale.value) > 0.0:
        raise InvalidArgumentError("cam_scale must be positive")
    moved = ad.add(ad.rodrigues_rotate(vertices, cam_rot), cam_trans)
    x = ad.take_column(moved, 0)
    y = ad.take_column(moved, 1)
    depth = ad.take_column(moved, 2)
    points = ad.stack_columns([ad.multiply(cam_scale, x), ad.multiply(cam_scale, y)])
    return points, depth


def select_landmarks(vertices, basis):
    """Rows of ``vertices`` at the basis landmark indices, order preserved."""
    idx = basis.landmark_indices
    if idx.max() >= ad.value_of(vertices).shape[0]:
        raise InvalidArgumentError("landmark index out of range for vertex array")
    return ad.gather_rows(vertices, idx)


def posed_mesh(basis, s, e, pose):
    return apply_pose(reconstruct_mesh(basis, s, e), pose, basis)


def landmarks_2d(basis, s, e, pose, cam_scale, cam_rot, cam_trans):
    """Projected 2D positions of the 68 landmarks for the given state."""
    verts = posed_mesh(basis, s, e, pose)
    marks = select_landmarks(verts, basis)
    points, _ = project(marks, cam_scale, cam_rot, cam_trans)
    return points


def params_landmarks_2d(basis, params):
    return landmarks_2d(basis, params.s, params.e, params.pose,
                        params.cam_scale, params.cam_rot, params.cam_trans)
