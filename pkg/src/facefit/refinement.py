"""Texture-guided pose refinement: render the current reconstruction
under sampled challenging head poses and re-fit pose/camera against the
resulting landmark targets.

Sampled angles are yaw in [-pi/2, pi/2], pitch in [-pi/4, pi/4], roll in
[-pi/2, pi/2]. The sampled pose replaces the global rotation as the
extrinsic composition yaw (about y), then pitch (about x), then roll
(about z); shape and expression stay frozen throughout refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from . import autodiff as ad
from .blendmodel import landmarks_2d, params_landmarks_2d
from .errors import InvalidArgumentError, OptimizationFailureError
from .losses import landmark_loss, reg_loss
from .optim import adam_init, adam_step, lr_schedule
from .render import render

YAW_RANGE = (-np.pi / 2.0, np.pi / 2.0)
PITCH_RANGE = (-np.pi / 4.0, np.pi / 4.0)
ROLL_RANGE = (-np.pi / 2.0, np.pi / 2.0)


@dataclass
class PoseSample:
    yaw: float
    pitch: float
    roll: float

    def __post_init__(self):
        if not (YAW_RANGE[0] <= self.yaw <= YAW_RANGE[1]
                and PITCH_RANGE[0] <= self.pitch <= PITCH_RANGE[1]
                and ROLL_RANGE[0] <= self.roll <= ROLL_RANGE[1]):
            raise InvalidArgumentError("pose sample outside the allowed ranges")


def sample_pose(seed):
    """Uniform seeded draw; angles sampled in yaw, pitch, roll order."""
    rng = np.random.default_rng(seed)
    return PoseSample(
        yaw=rng.uniform(*YAW_RANGE),
        pitch=rng.uniform(*PITCH_RANGE),
        roll=rng.uniform(*ROLL_RANGE),
    )


def pose_axis_angle(sample):
    """Axis-angle of the yaw->pitch->roll extrinsic composition."""
    return Rotation.from_euler(
        "yxz", [sample.yaw, sample.pitch, sample.roll]).as_rotvec()


def augment_render(basis, params, texture, sample, width, height, bands=1,
                   background=0.0):
    """Re-render the reconstruction under a sampled pose.

    Returns (render output, exact 68x2 landmark projections of the
    re-posed mesh, the re-posed parameters). Only the global-rotation
    part of the pose changes; jaw, camera, and lighting stay put.
    """
    aug = params.copy()
    aug.pose = params.pose.copy()
    aug.pose[:3] = pose_axis_angle(sample)
    aug.validate()
    out = render(basis, aug, texture, width, height, bands=bands,
                 background=background)
    marks = params_landmarks_2d(basis, aug)
    return out, marks, aug


def _canonical_rotvec(w):
    """Equivalent axis-angle with magnitude strictly below pi."""
    w = np.asarray(w, dtype=np.float64)
    norm = np.linalg.norm(w)
    if norm >= np.pi:
        wrapped = np.fmod(norm, 2.0 * np.pi)
        if wrapped >= np.pi:
            wrapped -= 2.0 * np.pi
        w = w * (wrapped / norm)
        norm = abs(wrapped)
    if norm >= np.pi:  # exactly pi after wrapping; nudge inside the chart
        w = w * ((np.pi - 1e-9) / norm)
    return w


@dataclass
class RefineResult:
    params: object
    initial_loss: float   # landmark term at the starting parameters
    final_loss: float     # landmark term at the returned parameters
    curve: list
    reg_term: float = 0.0  # frozen w_reg * (|s|^2 + |e|^2), constant shift


def refine_pose_camera(target_landmarks, params, basis, steps, lr,
                       w_reg=1.0, decay_every=None, decay_factor=0.7):
    """Adam refinement of (pose, camera) against 2D landmark targets.

    Shape/expression stay frozen; the returned parameters are the
    best-loss iterate, so the final landmark loss never exceeds the
    initial one. A non-finite loss raises OptimizationFailureError
    carrying the last finite iterate.

    The L1 landmark objective keeps a nonzero gradient arbitrarily close
    to the optimum, so a constant step oscillates; the rate decays by
    ``decay_factor`` every ``decay_every`` steps (default: a tenth of
    the run) to let the iterates settle.

    With s, e frozen the regularizer w_reg * (|s|^2 + |e|^2) is a
    constant shift of the objective: it cannot change gradients or the
    iterate ranking, so the reported losses are the landmark term and
    the shift is returned separately as ``reg_term``.
    """
    if steps < 1:
        raise InvalidArgumentError("steps must be at least 1")
    if decay_every is None:
        decay_every = max(steps // 10, 1)
    targets = np.asarray(target_landmarks, dtype=np.float64)
    leaves = {
        "pose": params.pose.copy(),
        "cam_rot": params.cam_rot.copy(),
        "cam_scale": np.asarray(float(params.cam_scale)),
        "cam_trans": params.cam_trans.copy(),
    }
    state = adam_init(leaves, lr=lr, lower_bounds={"cam_scale": 1e-6})
    reg_const = w_reg * float(reg_loss(params.s, params.e))

    def objective(ls, tape=None):
        if tape is None:
            marks = landmarks_2d(basis, params.s, params.e, ls["pose"],
                                 float(ls["cam_scale"]), ls["cam_rot"],
                                 ls["cam_trans"])
            return float(landmark_loss(marks, targets))
        vpose = tape.leaf(ls["pose"], "pose")
        vrot = tape.leaf(ls["cam_rot"], "cam_rot")
        vscale = tape.leaf(ls["cam_scale"], "cam_scale")
        vtrans = tape.leaf(ls["cam_trans"], "cam_trans")
        marks = landmarks_2d(basis, params.s, params.e, vpose,
                             vscale, vrot, vtrans)
        return landmark_loss(marks, targets)

    def to_params(ls):
        out = params.copy()
        out.pose = ls["pose"].copy()
        out.cam_rot = ls["cam_rot"].copy()
        out.cam_scale = float(ls["cam_scale"])
        out.cam_trans = ls["cam_trans"].copy()
        out.validate()
        return out

    initial = objective(leaves)
    best_loss, best_leaves = initial, {k: v.copy() for k, v in leaves.items()}
    curve = [initial]
    last_finite = best_leaves
    for step in range(steps):
        tape = ad.Tape()
        loss = objective(leaves, tape)
        value = float(loss)
        if not np.isfinite(value):
            raise OptimizationFailureError(
                "landmark refinement diverged",
                last_params=to_params(last_finite),
                diagnostics={"curve": curve})
        grads = tape.backward(loss)
        step_lr = lr_schedule(step, lr, decay_every, decay_factor)
        leaves, state = adam_step(leaves, grads, state, lr=step_lr)
        leaves["pose"] = np.concatenate([
            _canonical_rotvec(leaves["pose"][:3]),
            _canonical_rotvec(leaves["pose"][3:]),
        ])
        leaves["cam_rot"] = _canonical_rotvec(leaves["cam_rot"])
        value = objective(leaves)
        curve.append(value)
        if np.isfinite(value):
            last_finite = {k: v.copy() for k, v in leaves.items()}
            if value < best_loss:
                best_loss = value
                best_leaves = last_finite
    return RefineResult(params=to_params(best_leaves), initial_loss=initial,
                        final_loss=best_loss, curve=curve,
                        reg_term=reg_const)
