import json
import os

import numpy as np
import pytest

from facefit import imgio
from facefit.blendmodel import FaceParams
from facefit.errors import InvalidArgumentError
from facefit.losses import texture_loss
from facefit.pipeline import (FitConfig, export, fit, synth_target)
from facefit.render import render
from facefit.shading import DC_IDENTITY


def tiny_config(**kw):
    base = dict(phase1_steps=40, phase2_steps=30, phase3_steps=10,
                tgr_poses=1, vis_tex_refresh=10, texture_res=64, seed=0)
    base.update(kw)
    return FitConfig(**base)


def perturbed_init(tgt, seed=0, light_from_truth=False):
    rng = np.random.default_rng(seed)
    init = tgt.params.copy()
    init.s = init.s + rng.normal(0, 0.1, size=init.s.shape)
    init.e = init.e + rng.normal(0, 0.1, size=init.e.shape)
    init.pose = init.pose + rng.normal(0, 0.05, size=6)
    init.cam_rot = init.cam_rot + rng.normal(0, 0.03, size=3)
    init.cam_scale = init.cam_scale * float(1 + rng.uniform(-0.03, 0.03))
    init.cam_trans = init.cam_trans + rng.normal(0, 0.04, size=3)
    if not light_from_truth:
        light = np.zeros((9, 3))
        light[0] = DC_IDENTITY
        init.light = light
    return init


class TestSynthTarget:
    def test_seed_determinism(self, toy_basis):
        a = synth_target(toy_basis, seed=13, width=48, height=48)
        b = synth_target(toy_basis, seed=13, width=48, height=48)
        assert a.image.tobytes() == b.image.tobytes()
        assert np.array_equal(a.landmarks, b.landmarks)
        assert a.params.to_dict() == b.params.to_dict()
        c = synth_target(toy_basis, seed=14, width=48, height=48)
        assert a.image.tobytes() != c.image.tobytes()

    def test_landmarks_are_reprojections(self, toy_basis):
        from facefit.blendmodel import params_landmarks_2d
        tgt = synth_target(toy_basis, seed=2, width=48, height=48)
        assert np.array_equal(tgt.landmarks,
                              params_landmarks_2d(toy_basis, tgt.params))

    def test_skin_mask_is_render_coverage(self, toy_basis):
        tgt = synth_target(toy_basis, seed=2, width=48, height=48)
        out = render(toy_basis, tgt.params, tgt.texture, 48, 48)
        assert np.array_equal(tgt.skin_mask, out.proj_mask)


class TestFit:
    def test_zero_step_fit_echoes_initialization(self, toy_basis):
        tgt = synth_target(toy_basis, seed=3)
        cfg = tiny_config(phase1_steps=0, phase2_steps=0, phase3_steps=0)
        init = perturbed_init(tgt, seed=1)
        res = fit(cfg, tgt.image, tgt.skin_mask, tgt.landmarks, toy_basis,
                  initial=init)
        assert np.array_equal(res.params.s, init.s)
        assert np.array_equal(res.params.pose, init.pose)
        assert res.params.cam_scale == init.cam_scale
        # texture stays at the mid-gray initialization
        assert (res.texture_raw == 0.5).all()
        for key in ("final_landmark_px", "masked_image_l1", "identity_cosine"):
            assert np.isfinite(res.metrics[key])
        assert res.loss_curves["phase1"] == []

    def test_fit_improves_from_perturbed_init(self, toy_basis):
        tgt = synth_target(toy_basis, seed=4)
        cfg = tiny_config(phase1_steps=120, phase2_steps=120,
                          phase3_steps=30)
        init = perturbed_init(tgt, seed=2)
        res = fit(cfg, tgt.image, tgt.skin_mask, tgt.landmarks, toy_basis,
                  initial=init)
        curve = res.loss_curves["phase1"]
        assert res.metrics["final_landmark_px"] <= curve[0]
        assert curve[-1] < curve[0]
        assert res.loss_curves["phase2"][-1] < res.loss_curves["phase2"][0]

    def test_phase1_best_iterate_contract(self, toy_basis):
        from facefit.blendmodel import params_landmarks_2d
        from facefit.losses import landmark_loss
        tgt = synth_target(toy_basis, seed=5)
        cfg = tiny_config(phase1_steps=25, phase2_steps=0, phase3_steps=0)
        init = perturbed_init(tgt, seed=3)
        initial_lmk = float(landmark_loss(
            params_landmarks_2d(toy_basis, init), tgt.landmarks))
        res = fit(cfg, tgt.image, tgt.skin_mask, tgt.landmarks, toy_basis,
                  initial=init)
        assert res.metrics["final_landmark_px"] <= initial_lmk

    def test_default_initialization_used_when_absent(self, toy_basis):
        tgt = synth_target(toy_basis, seed=6)
        cfg = tiny_config(phase1_steps=60, phase2_steps=0, phase3_steps=0)
        res = fit(cfg, tgt.image, tgt.skin_mask, tgt.landmarks, toy_basis)
        curve = res.loss_curves["phase1"]
        assert curve[-1] < curve[0]

    def test_input_validation(self, toy_basis):
        tgt = synth_target(toy_basis, seed=7)
        cfg = tiny_config()
        bad_marks = tgt.landmarks.copy()
        bad_marks[0] = (-5.0, 2.0)
        with pytest.raises(InvalidArgumentError):
            fit(cfg, tgt.image, tgt.skin_mask, bad_marks, toy_basis)
        with pytest.raises(InvalidArgumentError):
            fit(cfg, tgt.image[:32], tgt.skin_mask, tgt.landmarks, toy_basis)
        with pytest.raises(InvalidArgumentError):
            fit(cfg, tgt.image, tgt.skin_mask[:32], tgt.landmarks, toy_basis)

    def test_phase2_geometry_continuation(self, toy_basis):
        # with the flag on, phase 2 keeps refining the landmark fit while
        # recovering texture
        from facefit.blendmodel import params_landmarks_2d
        from facefit.losses import landmark_loss
        tgt = synth_target(toy_basis, seed=12)
        init = perturbed_init(tgt, seed=7)
        cfg = tiny_config(phase1_steps=60, phase2_steps=40, phase3_steps=0,
                          phase2_geometry=True)
        res = fit(cfg, tgt.image, tgt.skin_mask, tgt.landmarks, toy_basis,
                  initial=init)
        initial_lmk = float(landmark_loss(
            params_landmarks_2d(toy_basis, init), tgt.landmarks))
        assert res.metrics["final_landmark_px"] < initial_lmk
        assert (res.texture_raw != 0.5).any()

    def test_guidance_diagnostics_flag(self, toy_basis):
        tgt = synth_target(toy_basis, seed=8)
        init = perturbed_init(tgt, seed=4)
        res_on = fit(tiny_config(phase1_steps=5, phase2_steps=0,
                                 phase3_steps=0, guidance_fusion=True),
                     tgt.image, tgt.skin_mask, tgt.landmarks, toy_basis,
                     initial=init)
        assert "guidance_attention" in res_on.diagnostics
        ga = res_on.diagnostics["guidance_attention"]
        assert ga["tokens"] == 16 and ga["dim"] == 32
        res_off = fit(tiny_config(phase1_steps=5, phase2_steps=0,
                                  phase3_steps=0, guidance_fusion=False),
                      tgt.image, tgt.skin_mask, tgt.landmarks, toy_basis,
                      initial=init)
        assert "guidance_attention" not in res_off.diagnostics


class TestDeterminismAndExport:
    def test_fit_deterministic_across_runs_and_bands(self, toy_basis,
                                                     tmp_path):
        tgt = synth_target(toy_basis, seed=9)
        init = perturbed_init(tgt, seed=5)
        outs = []
        for run, bands in (("a", 1), ("b", 1), ("c", 3)):
            cfg = tiny_config(bands=bands)
            res = fit(cfg, tgt.image, tgt.skin_mask, tgt.landmarks,
                      toy_basis, initial=init)
            d = str(tmp_path / run)
            export(res, d)
            outs.append(d)

        for name in ("params.json", "mesh.obj", "texture.f64", "render.f64",
                     "metrics.json", "texture.png", "render.png"):
            ref = open(os.path.join(outs[0], name), "rb").read()
            assert open(os.path.join(outs[1], name), "rb").read() == ref
            assert open(os.path.join(outs[2], name), "rb").read() == ref

    def test_export_round_trip(self, toy_basis, tmp_path):
        from facefit.blendmodel import posed_mesh
        tgt = synth_target(toy_basis, seed=10)
        cfg = tiny_config(phase1_steps=10, phase2_steps=10, phase3_steps=0)
        res = fit(cfg, tgt.image, tgt.skin_mask, tgt.landmarks, toy_basis,
                  initial=perturbed_init(tgt, seed=6))
        d = str(tmp_path / "out")
        export(res, d)

        v, vt, f = imgio.load_obj(os.path.join(d, "mesh.obj"))
        expected = posed_mesh(toy_basis, res.params.s, res.params.e,
                              res.params.pose)
        assert np.abs(v - expected).max() < 1e-9
        assert f.shape[0] == toy_basis.faces.shape[0]

        png = imgio.load_png(os.path.join(d, "texture.png"))
        assert np.abs(png - res.texture.rgb).max() <= 0.5 / 255.0 + 1e-12

        raw = imgio.load_raw(os.path.join(d, "texture.f64"))
        assert np.array_equal(raw, res.texture.rgb)

        params = FaceParams.from_dict(
            json.load(open(os.path.join(d, "params.json"))))
        assert np.array_equal(params.s, res.params.s)
        assert params.cam_scale == res.params.cam_scale

    def test_normalized_texture_loss_stable_across_resolution(self, toy_basis):
        # the same scene rendered at 64 and 128 px should give nearly the
        # same normalized masked L1 for the same mismatched texture
        from facefit.assets import procedural_texture
        other = procedural_texture(128, seed=123)
        losses = []
        for size in (64, 128):
            tgt = synth_target(toy_basis, seed=11, width=size, height=size)
            out = render(toy_basis, tgt.params, other, size, size)
            losses.append(float(texture_loss(tgt.image, out.image,
                                             tgt.skin_mask)))
        ratio = losses[1] / losses[0]
        assert abs(ratio - 1.0) < 0.05


class TestFitConfig:
    def test_json_round_trip(self):
        cfg = FitConfig(phase1_steps=11, rho=0.4, seed=7)
        d = json.loads(json.dumps(cfg.to_dict()))
        back = FitConfig.from_dict(d)
        assert back.phase1_steps == 11
        assert back.rho == 0.4
        assert back.weights.w_tex == 1.0

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            FitConfig(texture_res=48)
        with pytest.raises(InvalidArgumentError):
            FitConfig(phase1_steps=-1)
