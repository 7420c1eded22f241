"""Global ridge period from intensity profiles taken across the ridges."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import InvalidParameter, NoReliableSegments, OutOfBounds
from .orientation import bilinear, double_field, phase, sample_field


@dataclass
class PeriodEstimate:
    f_s: float
    T_s: float
    segment_length: float
    per_segment: list = dc_field(default_factory=list)  # [((row, col), frequency), ...]
    reliable_count: int = 0
    grid_count: int = 0


def segment_points(field, center, length: float, n_samples: int):
    """Sample positions (xs, ys) of the segment through ``center`` normal to the local orientation."""
    i, j = center
    theta = float(phase(np.asarray(field)[int(round(i)), int(round(j))]))
    nx, ny = -np.sin(theta), np.cos(theta)
    t = np.linspace(-length / 2, length / 2, n_samples)
    return j + t * nx, i + t * ny


def sample_profile(field, image, center, length: float, n_samples: int, doubled=None):
    """Orientations and grey values at ``n_samples`` points along the normal segment.

    Raises :class:`OutOfBounds` when the segment leaves the raster.
    """
    if n_samples < 8:
        raise InvalidParameter(f"need at least 8 samples, got {n_samples}")
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    xs, ys = segment_points(field, center, length, n_samples)
    if xs.min() < 0 or ys.min() < 0 or xs.max() > w - 1 or ys.max() > h - 1:
        raise OutOfBounds(f"segment at {center} leaves the {w}x{h} raster")
    o = sample_field(field, xs, ys, doubled=doubled)
    v = bilinear(img, xs, ys)
    return o, v


def profile_frequency(values, peak_ratio: float = 0.5) -> int | None:
    """Index of the first spectral peak above zero frequency, or None for a flat profile.

    Local maxima weaker than ``peak_ratio`` times the strongest non-zero frequency are
    interpolation ripple and are skipped.
    """
    v = uniform_filter1d(np.asarray(values, dtype=np.float64), size=3, mode="nearest")
    v = v - v.mean()
    mag = np.abs(np.fft.rfft(v))
    if not mag[1:].any():
        return None
    n = len(mag)
    floor = peak_ratio * mag[1:].max()
    for f in range(1, n):
        if mag[f] < floor:
            continue
        left = mag[f - 1]
        right = mag[f + 1] if f + 1 < n else -np.inf
        # strict rise from the left; a plateau on the right resolves to the lower frequency
        if mag[f] > left and mag[f] >= right:
            return f
    return None


def grid_points(shape, step: int):
    h, w = shape
    off = step // 2
    return [(i, j) for i in range(off, h, step) for j in range(off, w, step)]


def estimate_period(field, image, params, mask=None) -> PeriodEstimate:
    """Mean first-peak frequency over the reliable grid segments, converted to a pixel period.

    With ``mask``, segments with any sample outside the foreground are skipped: a step into
    the background swamps the ridge frequency.
    """
    length = float(params.segment_length)
    field = np.asarray(field)
    inside = None if mask is None else np.asarray(mask, dtype=bool)
    doubled = double_field(field)
    points = grid_points(field.shape, int(params.grid_step))
    per_segment = []
    for center in points:
        try:
            o, v = sample_profile(field, image, center, length, params.N_S, doubled=doubled)
        except OutOfBounds:
            continue
        if not np.abs(o).min() > params.t_tilde:
            continue
        if inside is not None:
            xs, ys = segment_points(field, center, length, params.N_S)
            if not inside[np.rint(ys).astype(int), np.rint(xs).astype(int)].all():
                continue
        f = profile_frequency(v, params.peak_ratio)
        if f is None:
            continue
        per_segment.append((center, f))
    if not per_segment:
        raise NoReliableSegments("no segment passed the reliability threshold")
    # grid order keeps the mean deterministic
    f_s = float(np.mean([f for _, f in per_segment]))
    return PeriodEstimate(f_s=f_s, T_s=length / f_s, segment_length=length,
                          per_segment=per_segment, reliable_count=len(per_segment),
                          grid_count=len(points))
