"""Command-line front end.

Exit codes: 0 success, 2 bad input or arguments, 3 empty foreground,
4 no reliable period segment, 5 iteration cap reached (artifacts still written).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import (EmptyForeground, FingerprintError, IterationCapExceeded, NoReliableSegments)
from .fileio import (format_keyvalues, read_field, read_image, read_mask,
                     write_field, write_pgm, write_png)
from .orientation import estimate_from_params
from .overlay import render_overlay
from .params import PipelineParams
from .period import estimate_period
from .pipeline import run_pipeline
from .preprocess import amplify_ridges, equalize, remove_border, segment
from .refine import refine
from .synth import (Singularity, angular_error, corrupt_region, ellipse_mask, render_ridges,
                    synth_field)

EXIT_OK, EXIT_INPUT, EXIT_FOREGROUND, EXIT_PERIOD, EXIT_CAP = 0, 2, 3, 4, 5


def _point(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y got {text!r}")
    return x, y


def _add_params(p):
    g = p.add_argument_group("parameters (override the config file)")
    g.add_argument("--config", type=Path, help="key = value parameter file")
    for f in fields(PipelineParams):
        g.add_argument(f"--{f.name}", dest=f"param_{f.name}", metavar="V", default=None)


def load_params(args) -> PipelineParams:
    raw = {}
    if getattr(args, "config", None) is not None:
        from .fileio import parse_keyvalues

        raw = parse_keyvalues(args.config.read_text(encoding="utf-8"))
    for f in fields(PipelineParams):
        v = getattr(args, f"param_{f.name}", None)
        if v is not None:
            raw[f.name] = v
    return PipelineParams.from_strings(raw)


def _print_items(items):
    sys.stdout.write(format_keyvalues(items))


def cmd_preprocess(args):
    params = load_params(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    eq = equalize(read_image(args.input), params.hist_sigma, params.clip)
    border = remove_border(eq.image, params.tau_V)
    M_F = segment(eq.image, border, params)
    write_pgm(out / "equalized.pgm", eq.image)
    write_pgm(out / "mask.pgm", M_F)
    write_pgm(out / "amplified.pgm", amplify_ridges(eq.image, M_F, params))
    _print_items([("threshold", eq.threshold), ("foreground_pixels", int(M_F.sum()))])


def cmd_extract(args):
    params = load_params(args)
    field = estimate_from_params(read_image(args.input), params)
    write_field(args.out, field)


def cmd_period(args):
    params = load_params(args)
    est = estimate_period(read_field(args.field), read_image(args.image), params)
    _print_items([("f_s", est.f_s), ("T_s", est.T_s), ("reliable_segments", est.reliable_count),
                  ("grid_segments", est.grid_count)])


def cmd_refine(args):
    params = load_params(args)
    image = read_image(args.image)
    mask = read_mask(args.mask)
    T_s = args.period
    if T_s is None:
        T_s = estimate_period(estimate_from_params(image, params), image, params).T_s
    code = EXIT_OK
    try:
        refined, trace = refine(image, mask, T_s, params)
        iterations = trace.iterations
    except IterationCapExceeded as exc:
        refined, iterations, trace, code = exc.field, exc.iterations, getattr(exc, "trace", None), EXIT_CAP
    write_field(args.out, refined)
    if args.trace is not None and trace is not None:
        d = Path(args.trace)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("O_1", "O_2", "O_3"):
            write_field(d / f"{name}.orf", getattr(trace, name))
        for name in ("M_1", "M_2", "M_3", "M_4"):
            write_pgm(d / f"{name}.pgm", getattr(trace, name))
    _print_items([("T_s", T_s), ("iterations", iterations), ("capped", str(code == EXIT_CAP).lower())])
    return code


def cmd_run(args):
    params = load_params(args)
    truth = read_field(args.truth) if args.truth else None
    try:
        report = run_pipeline(args.input, params, args.out, truth=truth, stride=args.stride,
                              figure=args.figure)
    except IterationCapExceeded:
        sys.stdout.write((Path(args.out) / "report").read_text())
        return EXIT_CAP
    sys.stdout.write(report.dumps())
    return EXIT_OK


def cmd_synth(args):
    sings = [Singularity(x, y, "loop") for x, y in args.loop]
    sings += [Singularity(x, y, "delta") for x, y in args.delta]
    field = synth_field(args.width, args.height, sings, np.radians(args.base_angle))
    truth = field
    if args.corrupt is not None:
        x, y, r = args.corrupt
        field = corrupt_region(field, (x, y), r, seed=args.seed)
    footprint = ellipse_mask(args.width, args.height, (args.width / 2, args.height / 2),
                             (0.42 * args.width, 0.45 * args.height))
    image = render_ridges(field, args.period, seed=args.seed, footprint=footprint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "image.pgm", image)
    write_pgm(out / "footprint.pgm", footprint)
    write_field(out / "truth.orf", truth)
    if args.corrupt is not None:
        write_field(out / "corrupted.orf", field)


def cmd_render(args):
    field = read_field(args.field)
    image = read_image(args.image) if args.image else np.full(field.shape, 255, dtype=np.uint8)
    write_png(args.out, render_overlay(image, field, args.stride))


def cmd_eval(args):
    a = read_field(args.truth)
    b = read_field(args.candidate)
    mask = read_mask(args.mask) if args.mask else None
    _print_items(angular_error(a, b, mask).items())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fporient", description="Fingerprint orientation field extraction and refinement.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="equalise, segment and amplify an image")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True, help="output directory")
    _add_params(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("extract", help="estimate the orientation field")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True, help="output .orf file")
    _add_params(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("period", help="estimate the ridge period")
    p.add_argument("field")
    p.add_argument("image")
    _add_params(p)
    p.set_defaults(func=cmd_period)

    p = sub.add_parser("refine", help="refine the orientation field of an image")
    p.add_argument("image")
    p.add_argument("mask")
    p.add_argument("--period", type=float, default=None, help="ridge period in pixels (estimated if omitted)")
    p.add_argument("-o", "--out", required=True, help="output .orf file")
    p.add_argument("--trace", default=None, help="directory for the intermediate fields and masks")
    _add_params(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--truth", default=None, help="ground-truth .orf for error statistics")
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--figure", action=argparse.BooleanOptionalAction, default=True,
                   help="also write report.png")
    _add_params(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic fingerprint with ground truth")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--loop", type=_point, action="append", default=[], metavar="X,Y")
    p.add_argument("--delta", type=_point, action="append", default=[], metavar="X,Y")
    p.add_argument("--base-angle", type=float, default=0.0, help="degrees")
    p.add_argument("--period", type=float, default=8.0)
    p.add_argument("--corrupt", type=float, nargs=3, default=None, metavar=("X", "Y", "R"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="draw a field as an overlay PNG")
    p.add_argument("field")
    p.add_argument("--image", default=None)
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="angular error between two fields")
    p.add_argument("truth")
    p.add_argument("candidate")
    p.add_argument("--mask", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except EmptyForeground as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FOREGROUND
    except NoReliableSegments as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PERIOD
    except (FingerprintError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
