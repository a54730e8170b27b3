import numpy as np
import pytest

from facefit import autodiff as ad
from facefit.assets import build_toy_head
from facefit.blendmodel import FaceParams
from facefit.errors import InvalidArgumentError
from facefit.gradcheck import central_diff, directional_probe, rel_err
from facefit.losses import texture_loss
from facefit.optim import adam_init, adam_step, lr_schedule
from facefit.render import assemble_image, pixel_geometry, shade_pixels
from facefit.shading import DC_IDENTITY


class TestTapeBasics:
    def test_square_gradient(self):
        tape = ad.Tape()
        x = tape.leaf(3.0, "x")
        g = tape.backward(ad.sum_all(x * x))
        assert float(g["x"]) == 6.0

    def test_loss_must_be_scalar_on_tape(self):
        tape = ad.Tape()
        x = tape.leaf(np.ones(3), "x")
        with pytest.raises(InvalidArgumentError):
            tape.backward(x)  # not scalar
        other = ad.Tape()
        y = other.leaf(1.0, "y")
        with pytest.raises(InvalidArgumentError):
            tape.backward(ad.sum_all(y * y))  # wrong tape

    def test_disconnected_leaf_gets_zeros(self):
        tape = ad.Tape()
        x = tape.leaf(np.ones(3), "x")
        y = tape.leaf(np.ones(2), "y")
        g = tape.backward(ad.sum_all(x * x))
        assert np.array_equal(g["y"], np.zeros(2))

    def test_duplicate_leaf_name_rejected(self):
        tape = ad.Tape()
        tape.leaf(1.0, "x")
        with pytest.raises(InvalidArgumentError):
            tape.leaf(2.0, "x")

    def test_gradient_linearity(self):
        rng = np.random.default_rng(0)
        x0 = rng.normal(size=5)
        a, b = 1.7, -0.6

        def grads(fn):
            tape = ad.Tape()
            x = tape.leaf(x0, "x")
            return tape.backward(fn(x))["x"]

        l1 = lambda x: ad.sum_all(x * x)
        l2 = lambda x: ad.sum_all(ad.absolute(x))
        combined = grads(lambda x: a * l1(x) + b * l2(x))
        separate = a * grads(l1) + b * grads(l2)
        assert np.abs(combined - separate).max() < 1e-10


class TestSoftmaxGradient:
    def test_softmax_weighted_sum_matches_fd(self):
        # loss = sum softmax(z) * c, h = 1e-6
        rng = np.random.default_rng(1)
        for _ in range(20):
            z = rng.normal(size=(1, 7))
            c = rng.normal(size=(1, 7))
            tape = ad.Tape()
            vz = tape.leaf(z, "z")
            loss = ad.sum_all(ad.multiply(ad.softmax_rows(vz), c))
            g = tape.backward(loss)["z"]

            def f(zz):
                return float(np.sum(ad.softmax_rows(zz) * c))

            err = directional_probe(g, f, z, rng, h=1e-6)
            assert err <= 1e-6
            # meaningful per-coordinate entries agree too
            fd = central_diff(f, z, h=1e-6)
            big = np.abs(fd) > 1e-4
            if big.any():
                assert (np.abs(g - fd)[big] / np.abs(fd)[big]).max() <= 1e-6


class TestRenderTexelSweep:
    def test_every_texel_matches_fd(self):
        # L_tex of a full 16x16 render differentiated to all texels of a
        # 4x4 texture; relative error <= 1e-4 elementwise
        basis = build_toy_head()
        light = np.zeros((9, 3))
        light[0] = DC_IDENTITY * 0.9
        params = FaceParams(
            s=np.zeros(basis.n_shape), e=np.zeros(basis.n_expr),
            cam_scale=5.3,
            cam_trans=np.array([16 / (2 * 5.3), 16 / (2 * 5.3), 0.0]),
            light=light)
        pix = pixel_geometry(basis, params, 16, 16)
        mask = pix.fragments.coverage.astype(np.uint8)
        rng = np.random.default_rng(2)
        tex = rng.uniform(0.25, 0.75, size=(4, 4, 3))
        target = rng.uniform(0.05, 0.95, size=(16, 16, 3))

        def objective(t):
            colors = shade_pixels(pix, t, light)
            _, image = assemble_image(pix, colors)
            return texture_loss(target, image, mask)

        tape = ad.Tape()
        vt = tape.leaf(tex, "tex")
        g = tape.backward(objective(vt))["tex"]
        fd = central_diff(lambda t: float(objective(t)), tex, h=1e-5)
        assert rel_err(g, fd, floor=1e-6) <= 1e-4


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        leaves = {"x": np.array([1.0, -2.0, 3.0])}
        state = adam_init(leaves, lr=0.1)
        out, _ = adam_step(leaves, {"x": np.zeros(3)}, state)
        assert np.array_equal(out["x"], leaves["x"])

    def test_first_step_magnitude_is_lr(self):
        for g0 in (4.0, -0.3, 1e6):
            leaves = {"x": np.array(0.0)}
            state = adam_init(leaves, lr=0.05)
            out, _ = adam_step(leaves, {"x": np.array(g0)}, state)
            update = float(out["x"])
            assert np.sign(update) == -np.sign(g0)
            assert abs(abs(update) - 0.05) < 0.05 * 1e-6

    def test_ten_step_trace_matches_reference(self):
        # independent straight-line Adam transcription
        lr, b1, b2, eps = 0.5, 0.9, 0.999, 1e-8
        x_ref, m, v = 0.0, 0.0, 0.0
        trace = []
        for t in range(1, 11):
            g = 2.0 * (x_ref - 5.0)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            x_ref = x_ref - lr * m_hat / (np.sqrt(v_hat) + eps)
            trace.append(x_ref)

        leaves = {"x": np.array(0.0)}
        state = adam_init(leaves, lr=lr)
        for t in range(10):
            g = {"x": np.asarray(2.0 * (leaves["x"] - 5.0))}
            leaves, state = adam_step(leaves, g, state)
            assert abs(float(leaves["x"]) - trace[t]) < 1e-12

    def test_sign_flip_antisymmetry_exact(self):
        rng = np.random.default_rng(3)
        x0 = rng.normal(size=4)
        g = rng.normal(size=4)
        a = adam_init({"x": x0}, lr=0.01)
        b = adam_init({"x": x0}, lr=0.01)
        out_a, _ = adam_step({"x": x0}, {"x": g}, a)
        out_b, _ = adam_step({"x": x0}, {"x": -g}, b)
        assert np.array_equal(out_a["x"] - x0, -(out_b["x"] - x0))

    def test_lower_bound_projection(self):
        leaves = {"cam_scale": np.array(1e-5)}
        state = adam_init(leaves, lr=0.5, lower_bounds={"cam_scale": 1e-6})
        out, _ = adam_step(leaves, {"cam_scale": np.array(100.0)}, state)
        assert float(out["cam_scale"]) >= 1e-6

    def test_shape_mismatch_rejected(self):
        leaves = {"x": np.zeros(3)}
        state = adam_init(leaves)
        with pytest.raises(InvalidArgumentError):
            adam_step(leaves, {"x": np.zeros(4)}, state)


class TestLrSchedule:
    def test_step_zero_is_base(self):
        assert lr_schedule(0, 1e-3, 10000, 0.9) == 1e-3

    def test_ten_percent_drop_at_decay_boundary(self):
        assert abs(lr_schedule(10000, 1e-3, 10000, 0.9) - 9e-4) < 1e-18

    def test_closed_form_mid_interval(self):
        assert abs(lr_schedule(25000, 1e-3, 10000, 0.9) - 8.1e-4) < 1e-18

    def test_invalid_args(self):
        with pytest.raises(InvalidArgumentError):
            lr_schedule(1, 1e-3, 0, 0.9)
        with pytest.raises(InvalidArgumentError):
            lr_schedule(1, 1e-3, 10, 1.5)


class TestAnalyticRotationHelpers:
    def test_sinc_sq_small_and_large(self):
        for u in (0.0, 1e-9, 1e-4, 0.5, 4.0):
            s = np.sqrt(u) if u > 0 else 0.0
            expected = 1.0 if u == 0 else np.sin(s) / s
            assert abs(float(ad.sinc_sq(np.asarray(u))) - expected) < 1e-12

    def test_versine_sq_small_and_large(self):
        # oracle via the cancellation-free half-angle identity
        for u in (0.0, 1e-9, 1e-4, 0.5, 4.0):
            if u == 0:
                expected = 0.5
            else:
                s = np.sqrt(u)
                expected = 2.0 * np.sin(s / 2.0) ** 2 / u
            assert abs(float(ad.versine_sq(np.asarray(u))) - expected) < 1e-12

    def test_rodrigues_gradient_smooth_through_zero(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(3, 3))
        w = rng.normal(size=(3, 3))
        for scale in (0.0, 1e-12, 1e-6, 1e-2):
            axis = np.array([1.0, -2.0, 0.5]) * scale
            tape = ad.Tape()
            va = tape.leaf(axis, "a")
            loss = ad.sum_all(ad.multiply(
                ad.rodrigues_rotate(pts, va), w))
            g = tape.backward(loss)["a"]
            assert np.isfinite(g).all()
        # at exactly zero the gradient equals sum_i w_i x p_i (derivative
        # of p + a x p at a = 0)
        tape = ad.Tape()
        va = tape.leaf(np.zeros(3), "a")
        loss = ad.sum_all(ad.multiply(ad.rodrigues_rotate(pts, va), w))
        g = tape.backward(loss)["a"]
        expected = sum(np.cross(pts[i], w[i]) for i in range(3))
        assert np.abs(g - expected).max() < 1e-12
