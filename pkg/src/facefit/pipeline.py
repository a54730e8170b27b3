"""Three-phase analysis-by-synthesis fitting.

Phase 1 aligns geometry (shape, expression, pose, camera) to the 2D
landmarks. Phase 2 recovers the UV texture and lighting against the
masked input image, with random patch occlusions, novel-view
self-consistency targets, and a visibility-weighted completion prior.
Phase 3 runs texture-guided pose refinement: re-render under sampled
challenging poses, re-fit pose/camera toward those landmark targets,
then re-fit home to the input landmarks, keeping the best result.

Coverage is frozen per forward pass, so geometry parameters receive
gradients only from the landmark and regularization terms, while texture
and light receive theirs through the rendered image.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import imgio
from .assets import procedural_texture
from .attention import (attention_weights, cross_attend,
                        geometry_feature_map, patch_tokens)
from .blendmodel import FaceParams, landmarks_2d, params_landmarks_2d, posed_mesh
from .errors import InvalidArgumentError, OptimizationFailureError
from .losses import (LossWeights, dct_embedding, identity_loss,
                     landmark_loss, reg_loss, texture_loss, total_loss,
                     visibility_loss)
from .masking import (combine_mask, completion_prior, make_patch_mask,
                      uv_visibility, visible_texel_mask)
from .optim import adam_init, adam_step, lr_schedule
from .refinement import (PoseSample, _canonical_rotvec, pose_axis_angle,
                         refine_pose_camera, sample_pose)
from .render import assemble_image, pixel_geometry, render, shade_pixels
from .shading import DC_IDENTITY, UvTexture


@dataclass
class FitConfig:
    width: int = 64
    height: int = 64
    texture_res: int = 256
    phase1_steps: int = 800
    phase2_steps: int = 1500
    phase3_steps: int = 500
    weights: LossWeights = field(default_factory=LossWeights)
    completion_weight: float = 0.25
    base_lr: float = 1e-3
    lr_decay_every: int = 500
    lr_decay_factor: float = 0.9
    phase3_lr: float = 5e-3
    k_views: int = 2
    view_yaw: float = 0.45
    view_pitch: float = 0.2
    vis_tex_refresh: int = 250
    patch: int = 16
    rho: float = 0.25
    seed: int = 0
    bands: int = 1
    background: float = 0.0
    optimize_light: bool = True
    phase2_geometry: bool = False
    tgr_poses: int = 2
    guidance_fusion: bool = True
    guidance_grid: int = 4
    guidance_dim: int = 32

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights.from_dict(self.weights)
        for name in ("phase1_steps", "phase2_steps", "phase3_steps",
                     "k_views", "tgr_poses"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be nonnegative")
        for name in ("texture_res",):
            r = getattr(self, name)
            if r < 1 or (r & (r - 1)) != 0:
                raise InvalidArgumentError(f"{name} must be a power of two")

    def to_dict(self):
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        # band count is a performance knob with contractually identical
        # output, so it is not part of the experiment record
        d.pop("bands")
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class SynthTarget:
    image: np.ndarray
    skin_mask: np.ndarray
    landmarks: np.ndarray
    params: FaceParams
    texture: UvTexture


@dataclass
class FitResult:
    params: FaceParams
    texture: UvTexture
    light_raw: np.ndarray
    texture_raw: np.ndarray
    loss_curves: dict
    metrics: dict
    diagnostics: dict
    basis: object
    config: FitConfig


def default_camera_init(basis, landmarks, width, height):
    """Rough scale/translation from the landmark cloud; no rotation."""
    marks = np.asarray(landmarks, dtype=np.float64)
    model = basis.template[basis.landmark_indices]
    spread_px = np.linalg.norm(marks - marks.mean(axis=0), axis=1).mean()
    spread_md = np.linalg.norm(
        model[:, :2] - model[:, :2].mean(axis=0), axis=1).mean()
    scale = max(spread_px / max(spread_md, 1e-9), 1e-3)
    trans_xy = marks.mean(axis=0) / scale - model[:, :2].mean(axis=0)
    return scale, np.array([trans_xy[0], trans_xy[1], 0.0])


def _novel_poses(config, params, rng):
    """Absolute pose vectors for the extra self-consistency views."""
    poses = []
    for _ in range(max(config.k_views - 1, 0)):
        sample = PoseSample(
            yaw=rng.uniform(-config.view_yaw, config.view_yaw),
            pitch=rng.uniform(-config.view_pitch, config.view_pitch),
            roll=0.0,
        )
        pose = params.pose.copy()
        pose[:3] = pose_axis_angle(sample)
        poses.append(pose)
    return poses


def _geometry_leaves(params):
    return {
        "s": params.s.copy(),
        "e": params.e.copy(),
        "pose": params.pose.copy(),
        "cam_rot": params.cam_rot.copy(),
        "cam_scale": np.asarray(float(params.cam_scale)),
        "cam_trans": params.cam_trans.copy(),
    }


def _apply_geometry_leaves(params, leaves):
    out = params.copy()
    out.s = leaves["s"].copy()
    out.e = leaves["e"].copy()
    out.pose = leaves["pose"].copy()
    out.cam_rot = leaves["cam_rot"].copy()
    out.cam_scale = float(leaves["cam_scale"])
    out.cam_trans = leaves["cam_trans"].copy()
    out.validate()
    return out


def _fit_phase1(config, basis, landmarks, params, curve):
    leaves = _geometry_leaves(params)
    state = adam_init(leaves, lr=config.base_lr,
                      lower_bounds={"cam_scale": 1e-6})
    w = config.weights

    def lmk_of(ls):
        marks = params_landmarks_2d(basis, _apply_geometry_leaves(params, ls))
        return float(landmark_loss(marks, landmarks))

    best_lmk = lmk_of(leaves)
    best = {k: v.copy() for k, v in leaves.items()}
    last_finite = best
    for step in range(config.phase1_steps):
        tape = ad.Tape()
        vs = {name: tape.leaf(val, name) for name, val in leaves.items()}
        marks = landmarks_2d(basis, vs["s"], vs["e"], vs["pose"],
                             vs["cam_scale"], vs["cam_rot"], vs["cam_trans"])
        loss = total_loss({"lmk": landmark_loss(marks, landmarks),
                           "reg": reg_loss(vs["s"], vs["e"])}, w)
        value = float(loss)
        if not np.isfinite(value):
            raise OptimizationFailureError(
                "phase 1 diverged",
                last_params=_apply_geometry_leaves(params, last_finite),
                diagnostics={"phase": 1, "step": step})
        curve.append(value)
        grads = tape.backward(loss)
        lr = lr_schedule(step, config.base_lr,
                         config.lr_decay_every, config.lr_decay_factor)
        leaves, state = adam_step(leaves, grads, state, lr=lr)
        leaves["pose"] = np.concatenate([
            _canonical_rotvec(leaves["pose"][:3]),
            _canonical_rotvec(leaves["pose"][3:])])
        leaves["cam_rot"] = _canonical_rotvec(leaves["cam_rot"])
        last_finite = {k: v.copy() for k, v in leaves.items()}
        cur_lmk = lmk_of(leaves)
        if cur_lmk < best_lmk:
            best_lmk = cur_lmk
            best = last_finite
    return _apply_geometry_leaves(params, best)


def _render_const_view(pix, texture_arr, light_arr, background):
    colors = shade_pixels(pix, texture_arr, light_arr)
    _, image = assemble_image(pix, colors, background=background)
    return image


def _fit_phase2(config, basis, image, skin_mask, landmarks, params,
                texture_arr, light_arr, rng_views, mask_seeds, curves):
    w = config.weights
    width, height = config.width, config.height
    skin = np.asarray(skin_mask, dtype=np.uint8)
    novel_poses = _novel_poses(config, params, rng_views)

    def current_params(ls):
        if not config.phase2_geometry:
            return params
        return _apply_geometry_leaves(params, ls)

    def rasterize_views(state_params):
        views = [pixel_geometry(basis, state_params, width, height,
                                bands=config.bands)]
        for pose in novel_poses:
            vp = state_params.copy()
            vp.pose = pose.copy()
            views.append(pixel_geometry(basis, vp, width, height,
                                        bands=config.bands))
        return views

    pix_views = rasterize_views(params)
    vis_prior = uv_visibility([pix_views[0].fragments], basis,
                              config.texture_res)

    leaves = {"texture": texture_arr.copy()}
    if config.optimize_light:
        leaves["light"] = light_arr.copy()
    if config.phase2_geometry:
        leaves.update(_geometry_leaves(params))
    state = adam_init(leaves, lr=config.base_lr,
                      lower_bounds={"cam_scale": 1e-6})

    # completion prior is a raw sum over texel edges; weight it per edge
    # so the config knob is resolution-independent
    res = config.texture_res
    prior_scale = config.completion_weight / (6.0 * res * max(res - 1, 1))

    best_total = np.inf
    best = {k: v.copy() for k, v in leaves.items()}
    last_finite = best
    targets = None

    for step in range(config.phase2_steps):
        if config.phase2_geometry and step > 0:
            # coverage is frozen per forward pass but follows the moving
            # geometry between steps
            pix_views = rasterize_views(current_params(leaves))
            vis_prior = uv_visibility([pix_views[0].fragments], basis,
                                      config.texture_res)
        base_cov = pix_views[0].fragments.coverage.astype(np.uint8)
        l_vis_const = float(visibility_loss(base_cov, skin))

        if step % max(config.vis_tex_refresh, 1) == 0:
            snap_tex = best["texture"]
            snap_light = best.get("light", light_arr)
            targets = [image]
            for pv in pix_views[1:]:
                targets.append(_render_const_view(
                    pv, snap_tex, snap_light, config.background))

        tape = ad.Tape()
        vtex = tape.leaf(leaves["texture"], "texture")
        vlight = tape.leaf(leaves["light"], "light") \
            if config.optimize_light else light_arr

        view_images = [
            _render_const_view(pv, vtex, vlight, config.background)
            for pv in pix_views
        ]
        masks = []
        for vi, pv in enumerate(pix_views):
            patch_mask = make_patch_mask(width, height, patch=config.patch,
                                         rho=config.rho,
                                         seed=int(mask_seeds[step, vi]))
            if vi == 0:
                masks.append(combine_mask(skin, patch_mask).grid)
            else:
                cov = pv.fragments.coverage.astype(np.uint8)
                masks.append(combine_mask(cov, patch_mask).grid)

        l_vis_tex = None
        for target, img, m in zip(targets, view_images, masks):
            term = texture_loss(target, img, m)
            l_vis_tex = term if l_vis_tex is None else ad.add(l_vis_tex, term)
        parts = {
            "tex": texture_loss(image, view_images[0], masks[0]),
            "vis_tex": ad.divide(l_vis_tex, float(len(pix_views))),
            "id": identity_loss(dct_embedding, image, view_images[0]),
            # coverage is frozen, so the visibility term is a constant
            # this step; it shapes the reported total, not the gradients
            "vis": l_vis_const,
        }
        if config.phase2_geometry:
            vs = {n: tape.leaf(leaves[n], n) for n in
                  ("s", "e", "pose", "cam_rot", "cam_scale", "cam_trans")}
            marks = landmarks_2d(basis, vs["s"], vs["e"], vs["pose"],
                                 vs["cam_scale"], vs["cam_rot"],
                                 vs["cam_trans"])
            parts["lmk"] = landmark_loss(marks, landmarks)
            parts["reg"] = reg_loss(vs["s"], vs["e"])
        prior = completion_prior(vtex, vis_prior)
        loss = ad.add(total_loss(parts, w), ad.multiply(prior_scale, prior))
        total = float(loss)
        if not np.isfinite(total):
            raise OptimizationFailureError(
                "phase 2 diverged", last_params=current_params(last_finite),
                diagnostics={"phase": 2, "step": step,
                             "texture": last_finite["texture"]})
        curves.append(total)
        grads = tape.backward(loss)
        lr = lr_schedule(step, config.base_lr,
                         config.lr_decay_every, config.lr_decay_factor)
        leaves, state = adam_step(leaves, grads, state, lr=lr)
        if config.phase2_geometry:
            leaves["pose"] = np.concatenate([
                _canonical_rotvec(leaves["pose"][:3]),
                _canonical_rotvec(leaves["pose"][3:])])
            leaves["cam_rot"] = _canonical_rotvec(leaves["cam_rot"])
        last_finite = {k: v.copy() for k, v in leaves.items()}
        if total < best_total:
            best_total = total
            best = last_finite

    out_light = best.get("light", light_arr)
    final_views = rasterize_views(current_params(best))
    vis_all = uv_visibility([p.fragments for p in final_views], basis,
                            config.texture_res)
    return best["texture"], out_light, vis_all, current_params(best)


def _fit_phase3(config, basis, landmarks, params, rng_tgr, curve):
    """Basin-hopping refinement through sampled challenging poses."""
    candidates = [(float(landmark_loss(
        params_landmarks_2d(basis, params), landmarks)), params)]
    curve.append(candidates[0][0])
    for _ in range(config.tgr_poses):
        sample = sample_pose(int(rng_tgr.integers(2 ** 63)))
        aug = params.copy()
        aug.pose = params.pose.copy()
        aug.pose[:3] = pose_axis_angle(sample)
        aug_marks = params_landmarks_2d(basis, aug)
        hop = refine_pose_camera(aug_marks, params, basis,
                                 steps=config.phase3_steps,
                                 lr=config.phase3_lr)
        home = refine_pose_camera(landmarks, hop.params, basis,
                                  steps=config.phase3_steps,
                                  lr=config.phase3_lr)
        final = home.params
        lmk = float(landmark_loss(
            params_landmarks_2d(basis, final), landmarks))
        candidates.append((lmk, final))
        curve.append(lmk)
    candidates.sort(key=lambda c: c[0])
    curve.append(candidates[0][0])
    return candidates[0][1]


def _guidance_diagnostics(config, basis, image, params):
    pix = pixel_geometry(basis, params, config.width, config.height,
                         bands=config.bands)
    f_t = patch_tokens(image, grid=config.guidance_grid,
                       dim=config.guidance_dim)
    f_g = patch_tokens(geometry_feature_map(pix), grid=config.guidance_grid,
                       dim=config.guidance_dim)
    fused = cross_attend(f_t, f_g)
    wmat = attention_weights(f_t, f_g)
    entropy = float(-(wmat * np.log(np.maximum(wmat, 1e-300))).sum(axis=1).mean())
    return {
        "tokens": int(fused.shape[0]),
        "dim": int(fused.shape[1]),
        "fused_mean": float(fused.mean()),
        "fused_std": float(fused.std()),
        "attention_entropy_mean": entropy,
    }


def fit(config, image, skin_mask, landmarks, basis, initial=None):
    """Run the three fitting phases and collect metrics.

    ``initial`` optionally seeds the parameters; otherwise shape and
    expression start at zero with a landmark-derived camera.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (config.height, config.width, 3):
        raise InvalidArgumentError(
            f"image shape {image.shape} does not match config "
            f"({config.height}, {config.width}, 3)")
    marks = np.asarray(landmarks, dtype=np.float64)
    if marks.shape != (68, 2):
        raise InvalidArgumentError("landmarks must be (68, 2)")
    if (marks[:, 0].min() < 0 or marks[:, 0].max() > config.width
            or marks[:, 1].min() < 0 or marks[:, 1].max() > config.height):
        raise InvalidArgumentError("landmarks must lie within the image")
    skin = np.asarray(skin_mask)
    if skin.shape != (config.height, config.width):
        raise InvalidArgumentError("skin mask must match the image grid")

    t_start = time.time()
    seq = np.random.SeedSequence(config.seed)
    rng_views, rng_tgr = (np.random.default_rng(s) for s in seq.spawn(2))
    mask_rng = np.random.default_rng(seq.spawn(1)[0])
    mask_seeds = mask_rng.integers(
        0, 2 ** 63, size=(max(config.phase2_steps, 1), max(config.k_views, 1)))

    if initial is not None:
        params = initial.copy()
    else:
        scale, trans = default_camera_init(basis, marks,
                                           config.width, config.height)
        light = np.zeros((9, 3))
        light[0, :] = DC_IDENTITY
        params = FaceParams(s=np.zeros(basis.n_shape),
                            e=np.zeros(basis.n_expr),
                            cam_scale=scale, cam_trans=trans, light=light)

    curves = {"phase1": [], "phase2": [], "phase3": []}
    diagnostics = {}

    if config.phase1_steps > 0:
        params = _fit_phase1(config, basis, marks, params, curves["phase1"])

    texture_raw = np.full((config.texture_res, config.texture_res, 3), 0.5)
    light_raw = params.light.copy()
    vis_all = None
    if config.phase2_steps > 0:
        texture_raw, light_raw, vis_all, params = _fit_phase2(
            config, basis, image, skin, marks, params, texture_raw,
            light_raw, rng_views, mask_seeds, curves["phase2"])
        params = params.copy()
        params.light = light_raw.copy()

    if config.phase3_steps > 0 and config.tgr_poses > 0:
        params = _fit_phase3(config, basis, marks, params, rng_tgr,
                             curves["phase3"])

    texture = UvTexture(rgb=texture_raw)
    final = render(basis, params, texture, config.width, config.height,
                   bands=config.bands, background=config.background)
    fit_marks = params_landmarks_2d(basis, params)
    eval_mask = (skin.astype(np.uint8) & final.proj_mask).astype(np.uint8)
    metrics = {
        "final_landmark_px": float(landmark_loss(fit_marks, marks)),
        "masked_image_l1": float(texture_loss(image, final.image, eval_mask)),
        "identity_cosine": 1.0 - float(identity_loss(
            dct_embedding, image, final.image)),
        "visibility_l1": float(visibility_loss(final.proj_mask, skin)),
        "reg": float(reg_loss(params.s, params.e)),
    }
    if vis_all is not None:
        metrics["invisible_texel_fraction"] = float(
            1.0 - visible_texel_mask(vis_all).mean())
    if config.guidance_fusion:
        diagnostics["guidance_attention"] = _guidance_diagnostics(
            config, basis, image, params)
    diagnostics["runtime_s"] = time.time() - t_start

    return FitResult(params=params, texture=texture, light_raw=light_raw,
                     texture_raw=texture_raw, loss_curves=curves,
                     metrics=metrics, diagnostics=diagnostics,
                     basis=basis, config=config)


def synth_target(basis, seed, width=64, height=64, texture_res=256):
    """Deterministic synthetic fitting target rendered from random state."""
    seq = np.random.SeedSequence(seed)
    rng = np.random.default_rng(seq.spawn(1)[0])

    s = rng.uniform(-0.6, 0.6, size=basis.n_shape)
    e = rng.uniform(-0.5, 0.5, size=basis.n_expr)
    pose = np.zeros(6)
    pose[:3] = rng.uniform(-0.22, 0.22, size=3)
    pose[3:] = rng.uniform(-0.1, 0.1, size=3)
    cam_rot = rng.uniform(-0.08, 0.08, size=3)
    scale = 0.33 * min(width, height) * rng.uniform(0.9, 1.1)
    jitter = rng.uniform(-1.5, 1.5, size=2)
    trans = np.array([(width / 2 + jitter[0]) / scale,
                      (height / 2 + jitter[1]) / scale, 0.0])
    light = np.zeros((9, 3))
    light[0, :] = DC_IDENTITY * rng.uniform(0.8, 0.95, size=3)
    light[1:4, :] = rng.uniform(-0.25, 0.25, size=(3, 3))
    light[4:, :] = rng.uniform(-0.12, 0.12, size=(5, 3))

    texture = procedural_texture(texture_res, seed=int(rng.integers(2 ** 31)))
    params = FaceParams(s=s, e=e, pose=pose, cam_scale=scale,
                        cam_rot=cam_rot, cam_trans=trans, light=light)
    out = render(basis, params, texture, width, height)
    landmarks = params_landmarks_2d(basis, params)
    return SynthTarget(image=out.image, skin_mask=out.proj_mask,
                       landmarks=landmarks, params=params, texture=texture)


def export(result, outdir):
    """Write mesh, texture, render, parameters, and metrics to a directory."""
    os.makedirs(outdir, exist_ok=True)
    basis = result.basis
    verts = posed_mesh(basis, result.params.s, result.params.e,
                       result.params.pose)
    imgio.save_obj(os.path.join(outdir, "mesh.obj"), verts,
                   basis.uv_coords, basis.faces)
    imgio.save_png(os.path.join(outdir, "texture.png"), result.texture.rgb)
    imgio.save_raw(os.path.join(outdir, "texture.f64"), result.texture.rgb)
    final = render(basis, result.params, result.texture,
                   result.config.width, result.config.height,
                   bands=result.config.bands,
                   background=result.config.background)
    imgio.save_png(os.path.join(outdir, "render.png"), final.image)
    imgio.save_raw(os.path.join(outdir, "render.f64"), final.image)
    with open(os.path.join(outdir, "params.json"), "w") as fh:
        json.dump(result.params.to_dict(), fh, indent=2)
    payload = {
        "metrics": result.metrics,
        "loss_curves": result.loss_curves,
        "config": result.config.to_dict(),
    }
    with open(os.path.join(outdir, "metrics.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
    return outdir
