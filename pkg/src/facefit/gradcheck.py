"""Randomized central finite-difference verification of every
differentiable primitive, runnable as a suite.

Each trial draws random inputs, computes tape gradients, and compares
the directional derivative along a random unit direction against a
central difference. Directional probes keep the compared quantities at
gradient-norm scale, so the relative-error tolerance is meaningful
(per-coordinate probes drown sub-noise entries in FD rounding).
Inputs are constructed away from the documented non-smooth points
(L1 ties, clamp boundaries).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .assets import build_toy_head
from .attention import cross_attend
from .blendmodel import FaceParams
from .errors import InvalidArgumentError
from .losses import (dct_embedding, identity_loss, landmark_loss, reg_loss,
                     texture_loss, visibility_loss)
from .masking import completion_prior
from .render import assemble_image, pixel_geometry, shade_pixels
from .shading import DC_IDENTITY, sh_shade

DEFAULT_TOL = 1e-6
RENDER_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    trials: int
    max_rel_err: float
    tol: float
    seconds: float

    @property
    def passed(self):
        return self.max_rel_err <= self.tol


def central_diff(f, x, h=1e-6):
    """Per-coordinate central differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = f(x)
        xf[i] = orig - h
        fm = f(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(grad, fd, floor=1e-8):
    g = np.asarray(grad, dtype=np.float64).reshape(-1)
    f = np.asarray(fd, dtype=np.float64).reshape(-1)
    if g.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(g), np.abs(f)), floor)
    return float((np.abs(g - f) / denom).max())


def directional_probe(grad, f, x, rng, h=1e-6):
    """|<grad, d> - central difference along d| relative error."""
    x = np.asarray(x, dtype=np.float64)
    d = rng.normal(size=x.shape)
    d /= np.linalg.norm(d.reshape(-1))
    fd = (f(x + h * d) - f(x - h * d)) / (2.0 * h)
    gd = float((np.asarray(grad) * d).sum())
    return abs(gd - fd) / max(abs(gd), abs(fd), 1e-8)


def _check_rodrigues(rng, trials):
    worst = 0.0
    for _ in range(trials):
        pts = rng.normal(size=(4, 3))
        axis = rng.normal(size=3) * rng.choice([1e-5, 0.3, 1.5])
        weights = rng.normal(size=(4, 3))

        tape = ad.Tape()
        va = tape.leaf(axis, "axis")
        vp = tape.leaf(pts, "pts")
        loss = ad.sum_all(ad.multiply(ad.rodrigues_rotate(vp, va), weights))
        grads = tape.backward(loss)

        worst = max(
            worst,
            directional_probe(
                grads["axis"],
                lambda a: float(np.sum(ad.rodrigues_rotate(pts, a) * weights)),
                axis, rng),
            directional_probe(
                grads["pts"],
                lambda p: float(np.sum(ad.rodrigues_rotate(p, axis) * weights)),
                pts, rng))
    return worst


def _check_bilinear(rng, trials):
    worst = 0.0
    for _ in range(trials):
        tex = rng.uniform(0.1, 0.9, size=(8, 8, 3))
        uv = rng.uniform(0.05, 0.95, size=(5, 2))
        weights = rng.normal(size=(5, 3))

        tape = ad.Tape()
        vt = tape.leaf(tex, "tex")
        loss = ad.sum_all(ad.multiply(ad.bilinear_sample(vt, uv), weights))
        grads = tape.backward(loss)
        worst = max(worst, directional_probe(
            grads["tex"],
            lambda t: float(np.sum(ad.bilinear_sample(t, uv) * weights)),
            tex, rng))
    return worst


def _check_sh_shade(rng, trials):
    worst = 0.0
    for _ in range(trials):
        albedo = rng.uniform(0.2, 0.9, size=(4, 3))
        normals = rng.normal(size=(4, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        light = np.zeros((9, 3))
        light[0] = DC_IDENTITY
        light += rng.normal(size=(9, 3)) * 0.1
        weights = rng.normal(size=(4, 3))

        tape = ad.Tape()
        va = tape.leaf(albedo, "albedo")
        vl = tape.leaf(light, "light")
        loss = ad.sum_all(ad.multiply(sh_shade(va, normals, vl), weights))
        grads = tape.backward(loss)
        worst = max(
            worst,
            directional_probe(
                grads["albedo"],
                lambda a: float(np.sum(sh_shade(a, normals, light) * weights)),
                albedo, rng, h=1e-4),
            directional_probe(
                grads["light"],
                lambda l: float(np.sum(sh_shade(albedo, normals, l) * weights)),
                light, rng, h=1e-4))
    return worst


def _check_softmax_attention(rng, trials):
    worst = 0.0
    for _ in range(trials):
        f_t = rng.normal(size=(6, 4))
        f_g = rng.normal(size=(6, 4))
        weights = rng.normal(size=(6, 4))

        tape = ad.Tape()
        vt = tape.leaf(f_t, "f_t")
        vg = tape.leaf(f_g, "f_g")
        loss = ad.sum_all(ad.multiply(cross_attend(vt, vg), weights))
        grads = tape.backward(loss)
        worst = max(
            worst,
            directional_probe(
                grads["f_t"],
                lambda t: float(np.sum(np.asarray(cross_attend(t, f_g)) * weights)),
                f_t, rng),
            directional_probe(
                grads["f_g"],
                lambda g: float(np.sum(np.asarray(cross_attend(f_t, g)) * weights)),
                f_g, rng))
    return worst


def _away_from_ties(rng, shape, gap=5e-3):
    """Random offsets whose magnitudes stay clear of the L1 kink."""
    sign = rng.choice([-1.0, 1.0], size=shape)
    return sign * rng.uniform(gap, 0.2, size=shape)


def _check_landmark_loss(rng, trials):
    worst = 0.0
    for _ in range(trials):
        target = rng.uniform(0, 32, size=(68, 2))
        pred = target + _away_from_ties(rng, (68, 2))
        tape = ad.Tape()
        vp = tape.leaf(pred, "pred")
        grads = tape.backward(landmark_loss(vp, target))
        worst = max(worst, directional_probe(
            grads["pred"], lambda p: float(landmark_loss(p, target)),
            pred, rng, h=1e-3))
    return worst


def _check_reg_loss(rng, trials):
    worst = 0.0
    for _ in range(trials):
        s = rng.normal(size=6)
        e = rng.normal(size=4)
        tape = ad.Tape()
        vs, ve = tape.leaf(s, "s"), tape.leaf(e, "e")
        grads = tape.backward(reg_loss(vs, ve))
        worst = max(
            worst,
            directional_probe(grads["s"], lambda x: float(reg_loss(x, e)), s, rng),
            directional_probe(grads["e"], lambda x: float(reg_loss(s, x)), e, rng))
    return worst


def _check_texture_loss(rng, trials):
    worst = 0.0
    for _ in range(trials):
        base = rng.uniform(0.2, 0.8, size=(6, 6, 3))
        pred = base + _away_from_ties(rng, (6, 6, 3), gap=1e-2)
        mask = (rng.random((6, 6)) < 0.7).astype(np.uint8)
        tape = ad.Tape()
        vp = tape.leaf(pred, "pred")
        grads = tape.backward(texture_loss(base, vp, mask))
        worst = max(worst, directional_probe(
            grads["pred"], lambda p: float(texture_loss(base, p, mask)),
            pred, rng, h=1e-3))
    return worst


def _check_identity_loss(rng, trials):
    worst = 0.0
    for _ in range(trials):
        a = rng.uniform(0.1, 0.9, size=(16, 16, 3))
        b = rng.uniform(0.1, 0.9, size=(16, 16, 3))
        tape = ad.Tape()
        vb = tape.leaf(b, "b")
        grads = tape.backward(identity_loss(dct_embedding, a, vb))
        worst = max(worst, directional_probe(
            grads["b"], lambda x: float(identity_loss(dct_embedding, a, x)),
            b, rng, h=1e-5))
    return worst


def _check_visibility_loss(rng, trials):
    worst = 0.0
    for _ in range(trials):
        skin = rng.uniform(0.0, 1.0, size=(8, 8))
        proj = skin + _away_from_ties(rng, (8, 8), gap=1e-2)
        tape = ad.Tape()
        vp = tape.leaf(proj, "proj")
        grads = tape.backward(visibility_loss(vp, skin))
        worst = max(worst, directional_probe(
            grads["proj"], lambda p: float(visibility_loss(p, skin)),
            proj, rng, h=1e-3))
    return worst


def _check_completion_prior(rng, trials):
    worst = 0.0
    for _ in range(trials):
        # all texel values distinct with spacing > 2h: no |.| ties in reach
        tex = rng.permutation(np.linspace(0.1, 0.9, 8 * 8 * 3)).reshape(8, 8, 3)
        vis = (rng.random((8, 8)) < 0.5).astype(np.float64)
        tape = ad.Tape()
        vt = tape.leaf(tex, "tex")
        grads = tape.backward(completion_prior(vt, vis))
        worst = max(worst, directional_probe(
            grads["tex"], lambda t: float(completion_prior(t, vis)),
            tex, rng, h=1e-3))
    return worst


class _RenderScene:
    """Cached 16x16 toy-head view for render-path gradient checks."""

    _cache = None

    @classmethod
    def get(cls):
        if cls._cache is None:
            basis = build_toy_head()
            light = np.zeros((9, 3))
            light[0] = DC_IDENTITY * 0.9
            light[1:4] = 0.1
            params = FaceParams(
                s=np.zeros(basis.n_shape), e=np.zeros(basis.n_expr),
                cam_scale=5.3,
                cam_trans=np.array([16 / (2 * 5.3), 16 / (2 * 5.3), 0.0]),
                light=light)
            pix = pixel_geometry(basis, params, 16, 16)
            cls._cache = (basis, params, pix)
        return cls._cache


def render_texture_objective(pix, light, target, mask):
    """Callable L_tex(texture) through a frozen-fragment 16x16 render."""

    def f(tex):
        colors = shade_pixels(pix, tex, light)
        _, image = assemble_image(pix, colors)
        return texture_loss(target, image, mask)

    return f


def _check_render_path(rng, trials):
    """L_tex of a full 16x16 render, differentiated through to texels."""
    _, params, pix = _RenderScene.get()
    mask = pix.fragments.coverage.astype(np.uint8)
    worst = 0.0
    for _ in range(trials):
        tex = rng.uniform(0.2, 0.8, size=(8, 8, 3))
        target = rng.uniform(0.1, 0.9, size=(16, 16, 3))
        objective = render_texture_objective(pix, params.light, target, mask)

        tape = ad.Tape()
        vt = tape.leaf(tex, "tex")
        grads = tape.backward(objective(vt))
        worst = max(worst, directional_probe(
            grads["tex"], lambda t: float(objective(t)), tex, rng, h=1e-7))
    return worst


_CHECKS = {
    "rodrigues": (_check_rodrigues, DEFAULT_TOL),
    "bilinear": (_check_bilinear, DEFAULT_TOL),
    "sh_shade": (_check_sh_shade, DEFAULT_TOL),
    "softmax_attention": (_check_softmax_attention, DEFAULT_TOL),
    "landmark_loss": (_check_landmark_loss, DEFAULT_TOL),
    "reg_loss": (_check_reg_loss, DEFAULT_TOL),
    "texture_loss": (_check_texture_loss, DEFAULT_TOL),
    "identity_loss": (_check_identity_loss, DEFAULT_TOL),
    "visibility_loss": (_check_visibility_loss, DEFAULT_TOL),
    "completion_prior": (_check_completion_prior, DEFAULT_TOL),
    "render_path": (_check_render_path, RENDER_TOL),
}


def available_checks():
    return sorted(_CHECKS)


def run_suite(names="all", trials=200, seed=0):
    """Run the requested checks; returns a list of CheckResult."""
    if names in ("all", None):
        selected = available_checks()
    elif isinstance(names, str):
        selected = [names]
    else:
        selected = list(names)
    results = []
    for name in selected:
        if name not in _CHECKS:
            raise InvalidArgumentError(
                f"unknown check {name!r}; available: {', '.join(available_checks())}")
        fn, tol = _CHECKS[name]
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, sum(map(ord, name))]))
        t0 = time.time()
        worst = fn(rng, trials)
        results.append(CheckResult(name=name, trials=trials,
                                   max_rel_err=worst, tol=tol,
                                   seconds=time.time() - t0))
    return results
