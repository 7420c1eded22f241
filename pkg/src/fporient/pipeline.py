"""End-to-end driver: pre-processing, estimation, period, refinement, artifacts and report."""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .errors import IterationCapExceeded
from .fileio import atomic_write_bytes, format_keyvalues, read_image, write_field, write_pgm, write_png
from .orientation import estimate_from_params
from .overlay import render_overlay
from .params import PipelineParams
from .period import estimate_period
from .preprocess import amplify_ridges, equalize, remove_border, segment
from .refine import refine
from .synth import angular_error

ARTIFACTS = ("equalized.pgm", "mask.pgm", "amplified.pgm", "orientation.orf", "refined.orf",
             "overlay.png", "report")


@dataclass
class PipelineReport:
    input: str
    width: int = 0
    height: int = 0
    threshold: float = 0.0
    foreground_pixels: int = 0
    f_s: float = 0.0
    T_s: float = 0.0
    reliable_segments: int = 0
    iterations: int = 0
    capped: bool = False
    timings: dict = dc_field(default_factory=dict)
    errors: dict = dc_field(default_factory=dict)  # label -> ErrorStats

    def items(self):
        out = [("input", self.input), ("width", self.width), ("height", self.height),
               ("threshold", self.threshold), ("foreground_pixels", self.foreground_pixels),
               ("f_s", self.f_s), ("T_s", self.T_s), ("reliable_segments", self.reliable_segments),
               ("iterations", self.iterations), ("capped", str(self.capped).lower())]
        out += [(f"time_{k}", f"{v:.4f}") for k, v in self.timings.items()]
        for label, stats in self.errors.items():
            out += [(f"{label}_{k}", v) for k, v in stats.items()]
        return out

    def dumps(self) -> str:
        return format_keyvalues(self.items())


class _Clock:
    def __init__(self, report: PipelineReport):
        self.report = report

    def __call__(self, name):
        self.name = name
        return self

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.name] = max(0.0, time.perf_counter() - self.t0)


def run_pipeline(input_path, params: PipelineParams, outdir, truth=None, stride: int = 8,
                 figure: bool = False) -> PipelineReport:
    """Run every stage on ``input_path`` and write the artifacts into ``outdir``.

    ``truth`` (a field) adds error statistics of both fields over the foreground.
    Raises the stage errors unchanged, except :class:`IterationCapExceeded`, which is
    raised only after every artifact (with the best-so-far refined field) is written.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    image = read_image(input_path)
    report = PipelineReport(str(input_path), image.shape[1], image.shape[0])
    clock = _Clock(report)

    with clock("preprocess"):
        eq = equalize(image, params.hist_sigma, params.clip)
        border = remove_border(eq.image, params.tau_V)
        M_F = segment(eq.image, border, params)
        amplified = amplify_ridges(eq.image, M_F, params)
    report.threshold = eq.threshold
    report.foreground_pixels = int(M_F.sum())
    write_pgm(out / "equalized.pgm", eq.image)
    write_pgm(out / "mask.pgm", M_F)
    write_pgm(out / "amplified.pgm", amplified)

    with clock("orientation"):
        O = estimate_from_params(amplified, params)
    write_field(out / "orientation.orf", O)

    with clock("period"):
        period = estimate_period(O, amplified, params, M_F)
    report.f_s, report.T_s = period.f_s, period.T_s
    report.reliable_segments = period.reliable_count

    capped = None
    with clock("refine"):
        try:
            refined, trace = refine(amplified, M_F, period.T_s, params, field=O)
            report.iterations = trace.iterations
        except IterationCapExceeded as exc:
            capped = exc
            refined = exc.field
            report.iterations = exc.iterations
            report.capped = True
    write_field(out / "refined.orf", refined)
    write_png(out / "overlay.png", render_overlay(amplified, refined, stride))

    if truth is not None:
        report.errors["orientation"] = angular_error(O, truth, M_F)
        report.errors["refined"] = angular_error(refined, truth, M_F)
    atomic_write_bytes(out / "report", report.dumps().encode())
    if figure:
        from .figures import pipeline_figure

        pipeline_figure(out / "report.png", image, M_F, O, refined, report)
    if capped is not None:
        raise capped
    return report
