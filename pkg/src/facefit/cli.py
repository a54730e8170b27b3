"""Command-line interface.

Subcommands:
    fit       fit geometry, texture, and lighting to one face image
    synth     render a synthetic fitting target from random parameters
    gradcheck run the finite-difference gradient suite
    bench     time the renderer on the test head

Exit codes: 0 success, 2 invalid input, 3 optimization/check failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import imgio
from .assets import build_toy_head, load_basis, save_basis
from .errors import InvalidArgumentError, OptimizationFailureError
from .gradcheck import available_checks, run_suite
from .pipeline import FitConfig, export, fit, synth_target
from .render import pixel_geometry, render, shade_pixels
from . import autodiff as ad
from .losses import texture_loss
from .render import assemble_image


_WEIGHT_FLAGS = ("w_lmk", "w_tex", "w_vis_tex", "w_id", "w_reg", "w_vis")


def _cmd_fit(args):
    image = imgio.load_png(args.image)
    mask = imgio.load_mask_png(args.mask)
    landmarks = imgio.load_landmarks_json(args.landmarks)
    basis = load_basis(args.basis)
    if args.config:
        with open(args.config) as fh:
            config = FitConfig.from_dict(json.load(fh))
    else:
        config = FitConfig()
    config.height, config.width = image.shape[:2]
    overrides = {name: getattr(args, name) for name in _WEIGHT_FLAGS
                 if getattr(args, name) is not None}
    if overrides:
        merged = config.weights.to_dict()
        merged.update(overrides)
        config.weights = type(config.weights).from_dict(merged)

    result = fit(config, image, mask, landmarks, basis)
    export(result, args.out)
    print(f"wrote {args.out}")
    for key, value in result.metrics.items():
        print(f"  {key}: {value:.6g}")
    return 0


def _cmd_synth(args):
    basis = build_toy_head()
    target = synth_target(basis, seed=args.seed, width=args.size,
                          height=args.size, texture_res=args.texture_res)
    os.makedirs(args.out, exist_ok=True)
    imgio.save_png(os.path.join(args.out, "image.png"), target.image)
    imgio.save_raw(os.path.join(args.out, "image.f64"), target.image)
    imgio.save_mask_png(os.path.join(args.out, "mask.png"), target.skin_mask)
    imgio.save_landmarks_json(os.path.join(args.out, "landmarks.json"),
                              target.landmarks)
    imgio.save_png(os.path.join(args.out, "texture_truth.png"),
                   target.texture.rgb)
    with open(os.path.join(args.out, "truth.json"), "w") as fh:
        json.dump({"seed": args.seed, "params": target.params.to_dict()},
                  fh, indent=2)
    save_basis(basis, os.path.join(args.out, "basis"))
    print(f"wrote synthetic target (seed {args.seed}) to {args.out}")
    return 0


def _cmd_gradcheck(args):
    names = "all" if args.suite == "all" else args.suite.split(",")
    results = run_suite(names, trials=args.trials, seed=args.seed)
    failed = False
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed = failed or not r.passed
        print(f"{status} {r.name:20s} trials={r.trials} "
              f"max_rel_err={r.max_rel_err:.3e} tol={r.tol:.0e} "
              f"({r.seconds:.2f}s)")
    return 3 if failed else 0


def _cmd_bench(args):
    if args.scene != "toyhead":
        raise InvalidArgumentError(f"unknown scene {args.scene!r}")
    basis = build_toy_head()
    target = synth_target(basis, seed=0, width=args.size, height=args.size)
    params, texture = target.params, target.texture

    t0 = time.time()
    pix = pixel_geometry(basis, params, args.size, args.size,
                         bands=args.bands)
    t_raster = time.time() - t0

    t0 = time.time()
    render(basis, params, texture, args.size, args.size, bands=args.bands)
    t_render = time.time() - t0

    t0 = time.time()
    tape = ad.Tape()
    vt = tape.leaf(texture.rgb, "texture")
    colors = shade_pixels(pix, vt, params.light)
    _, image = assemble_image(pix, colors)
    loss = texture_loss(target.image, image,
                        pix.fragments.coverage.astype(np.uint8))
    tape.backward(loss)
    t_backward = time.time() - t0

    print(f"scene=toyhead size={args.size} bands={args.bands} "
          f"faces={basis.faces.shape[0]} covered={int(pix.flat_index.size)}")
    print(f"  rasterize+interp : {t_raster * 1e3:8.2f} ms")
    print(f"  full render      : {t_render * 1e3:8.2f} ms")
    print(f"  texture backward : {t_backward * 1e3:8.2f} ms")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="facefit",
        description="Textured monocular 3D face reconstruction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a face image")
    p_fit.add_argument("--image", required=True, help="input PNG")
    p_fit.add_argument("--mask", required=True,
                       help="skin mask PNG (>=128 means skin)")
    p_fit.add_argument("--landmarks", required=True,
                       help="JSON array of 68 [x, y] pixel pairs")
    p_fit.add_argument("--basis", required=True, help="basis asset directory")
    p_fit.add_argument("--config", help="fit config JSON")
    p_fit.add_argument("--out", required=True, help="output directory")
    for name in _WEIGHT_FLAGS:
        p_fit.add_argument(f"--{name.replace('_', '-')}", dest=name,
                           type=float, default=None,
                           help=f"override loss weight {name}")
    p_fit.set_defaults(func=_cmd_fit)

    p_synth = sub.add_parser("synth", help="write a synthetic target")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--size", type=int, default=64)
    p_synth.add_argument("--texture-res", type=int, default=256)
    p_synth.set_defaults(func=_cmd_synth)

    p_grad = sub.add_parser("gradcheck", help="finite-difference suite")
    p_grad.add_argument("--suite", default="all",
                        help="'all' or comma-separated names: "
                             + ", ".join(available_checks()))
    p_grad.add_argument("--trials", type=int, default=200)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.set_defaults(func=_cmd_gradcheck)

    p_bench = sub.add_parser("bench", help="renderer timings")
    p_bench.add_argument("--scene", default="toyhead")
    p_bench.add_argument("--size", type=int, default=64,
                         choices=(64, 128, 256))
    p_bench.add_argument("--bands", type=int, default=1)
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OptimizationFailureError as exc:
        print(f"optimization failure: {exc}", file=sys.stderr)
        return 3
    except (InvalidArgumentError, OSError, ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
