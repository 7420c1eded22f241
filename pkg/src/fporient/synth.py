"""Synthetic ground truth: singularity-model fields, ridge rendering, corruption and error metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import signal

from .errors import DimensionMismatch, EmptyMask, InvalidParameter
from .imgproc import rescale_linear, to_gray
from .orientation import from_angle, phase


@dataclass(frozen=True)
class Singularity:
    x: float  # column
    y: float  # row
    kind: Literal["loop", "delta"] = "loop"


@dataclass(frozen=True)
class ErrorStats:
    mean_deg: float
    rmse_deg: float
    max_deg: float
    pixel_count: int

    def items(self):
        return [("mean_deg", self.mean_deg), ("rmse_deg", self.rmse_deg),
                ("max_deg", self.max_deg), ("pixel_count", self.pixel_count)]


def synth_field(width: int, height: int, singularities=(), base_angle: float = 0.0) -> np.ndarray:
    """Unit orientation field whose doubled angle is ``2*base + sum(+-arg(z - z_s))``.

    Loops add their argument, deltas subtract it; the pixel nearest each
    singularity gets magnitude 0.
    """
    sings = list(singularities)
    for s in sings:
        if s.kind not in ("loop", "delta"):
            raise InvalidParameter(f"unknown singularity kind {s.kind!r}")
        if not (0 <= s.x <= width - 1 and 0 <= s.y <= height - 1):
            raise InvalidParameter(f"singularity {s} lies outside the {width}x{height} raster")
    for a in range(len(sings)):
        for b in range(a + 1, len(sings)):
            if (sings[a].x, sings[a].y) == (sings[b].x, sings[b].y):
                raise InvalidParameter("coincident singularities")
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    doubled = np.full((height, width), 2.0 * base_angle)
    for s in sings:
        sign = 1.0 if s.kind == "loop" else -1.0
        doubled += sign * np.arctan2(y - s.y, x - s.x)
    field = from_angle(doubled / 2.0)
    for s in sings:
        field[int(round(s.y)), int(round(s.x))] = 0.0
    return field


def sinusoid_image(width: int, height: int, angle: float, period: float,
                   phase_offset: float = 0.0) -> np.ndarray:
    """Grey sinusoidal ridges running along ``angle`` (radians from the column axis)."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    across = -x * math.sin(angle) + y * math.cos(angle)
    return to_gray(127.5 + 127.5 * np.cos(2 * np.pi * across / period + phase_offset))


def ellipse_mask(width: int, height: int, center, axes, angle: float = 0.0) -> np.ndarray:
    """Filled ellipse; ``center`` is (x, y), ``axes`` the (x, y) semi-axes before rotation."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    dx, dy = x - center[0], y - center[1]
    c, s = math.cos(angle), math.sin(angle)
    u = (dx * c + dy * s) / axes[0]
    v = (-dx * s + dy * c) / axes[1]
    return u * u + v * v <= 1.0


def gabor_kernel(theta: float, period: float, sigma: float | None = None,
                 elongation: float = 1.0) -> np.ndarray:
    """Zero-mean even Gabor kernel oscillating across the orientation ``theta``.

    The envelope is ``elongation`` times longer along the ridges than across them.
    """
    sigma = 0.5 * period if sigma is None else sigma
    radius = int(math.ceil(3 * sigma * max(1.0, elongation)))
    y, x = np.mgrid[-radius:radius + 1, -radius:radius + 1].astype(np.float64)
    across = -x * math.sin(theta) + y * math.cos(theta)
    along = x * math.cos(theta) + y * math.sin(theta)
    env = np.exp(-(across ** 2 + (along / elongation) ** 2) / (2 * sigma * sigma))
    k = env * np.cos(2 * np.pi * across / period)
    k -= env * (k.sum() / env.sum())
    return k / np.abs(k).sum()


def render_ridges(field, period: float, seed: int = 0, iterations: int = 6,
                  footprint=None, n_bins: int = 24, elongation: float = 3.0) -> np.ndarray:
    """Render a ridge pattern following ``field`` by iterated oriented band-pass filtering of noise.

    Ridges come out dark on a light background.  Pixels outside ``footprint``
    (when given) are set to 255.
    """
    if period < 4:
        raise InvalidParameter(f"period must be >= 4, got {period}")
    if iterations < 1 or n_bins < 4:
        raise InvalidParameter("need at least one iteration and four orientation bins")
    field = np.asarray(field)
    h, w = field.shape
    rng = np.random.default_rng(seed)
    img = rng.uniform(-1.0, 1.0, size=(h, w))
    # blend the two nearest orientation bins
    pos = phase(field) / np.pi * n_bins
    lo = np.floor(pos).astype(np.int64) % n_bins
    hi = (lo + 1) % n_bins
    frac = pos - np.floor(pos)
    kernels = [gabor_kernel(b * np.pi / n_bins, period, elongation=elongation)
               for b in range(n_bins)]
    pad = kernels[0].shape[0] // 2
    for _ in range(iterations):
        padded = np.pad(img, pad, mode="reflect")
        resp = np.empty((n_bins, h, w))
        for b, k in enumerate(kernels):
            resp[b] = signal.fftconvolve(padded, k, mode="valid")
        rows, cols = np.indices((h, w))
        out = (1 - frac) * resp[lo, rows, cols] + frac * resp[hi, rows, cols]
        scale = np.abs(out).max()
        img = np.tanh(3.0 * out / scale) if scale > 0 else out
    gray = rescale_linear(-img, 0, 255)
    if footprint is not None:
        gray = np.where(np.asarray(footprint, dtype=bool), gray, 255.0)
    return to_gray(gray)


def corrupt_region(field, center, radius: float, seed: int = 0) -> np.ndarray:
    """Replace phases inside the open disk ``|p - center| < radius`` with uniform random ones.

    ``center`` is (x, y).  Magnitudes are kept.
    """
    if radius < 0:
        raise InvalidParameter(f"radius must be >= 0, got {radius}")
    out = np.array(field, dtype=np.complex128, copy=True)
    h, w = out.shape
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    inside = (x - center[0]) ** 2 + (y - center[1]) ** 2 < radius * radius
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, np.pi, size=int(inside.sum()))
    out[inside] = from_angle(angles, np.abs(out[inside]))
    return out


def angular_difference(a, b) -> np.ndarray:
    """Per-pixel orientation difference in radians, in [0, pi/2]."""
    d = np.abs(phase(a) - phase(b))
    return np.minimum(d, np.pi - d)


def angular_error(a, b, mask=None) -> ErrorStats:
    """Orientation error statistics over ``mask`` pixels where both fields are non-zero."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"field shapes differ: {a.shape} vs {b.shape}")
    valid = (np.abs(a) > 0) & (np.abs(b) > 0)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    if not valid.any():
        raise EmptyMask("no pixel to compare")
    d = np.degrees(angular_difference(a[valid], b[valid]))
    return ErrorStats(float(d.mean()), float(np.sqrt(np.mean(d * d))), float(d.max()), int(d.size))
