"""Orientation overlay: short dark segments drawn over the grey image, opacity from reliability."""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, InvalidParameter
from .imgproc import as_real, to_gray
from .orientation import phase


def grid_centers(shape, stride: int):
    h, w = shape
    off = stride // 2
    rows = off + stride * np.arange(h // stride)
    cols = off + stride * np.arange(w // stride)
    return [(int(i), int(j)) for i in rows for j in cols]


def segment_pixels(center, angle: float, length: float, shape):
    """Raster pixels (rows, cols) of the segment of ``length`` through ``center`` = (row, col)."""
    h, w = shape
    n = max(2, int(np.ceil(4 * length)) + 1)
    t = np.linspace(-length / 2, length / 2, n)
    rows = np.rint(center[0] + t * np.sin(angle)).astype(np.int64)
    cols = np.rint(center[1] + t * np.cos(angle)).astype(np.int64)
    ok = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    px = np.unique(np.stack([rows[ok], cols[ok]]), axis=1)
    return px[0], px[1]


def overlay_segments(field, stride: int = 8):
    """``[(center, angle, opacity), ...]`` for every grid point, opacity = magnitude clipped to [0, 1]."""
    if stride < 4:
        raise InvalidParameter(f"stride must be >= 4, got {stride}")
    f = np.asarray(field)
    theta = phase(f)
    alpha = np.clip(np.abs(f), 0.0, 1.0)
    return [(c, float(theta[c]), float(alpha[c])) for c in grid_centers(f.shape, stride)]


def render_overlay(image, field, stride: int = 8, ink: float = 0.0) -> np.ndarray:
    """Grey + alpha raster ``(h, w, 2)``; the alpha channel is opaque, the segments are blended in."""
    img = as_real(image)
    f = np.asarray(field)
    if img.shape != f.shape:
        raise DimensionMismatch(f"image {img.shape} and field {f.shape} differ")
    out = img.copy()
    length = 0.8 * stride
    for center, angle, a in overlay_segments(f, stride):
        if a == 0:
            continue
        rows, cols = segment_pixels(center, angle, length, img.shape)
        out[rows, cols] = (1 - a) * out[rows, cols] + a * ink
    gray = to_gray(out)
    return np.stack([gray, np.full_like(gray, 255)], axis=-1)
