"""Pre-processing: grey-level equalisation, border removal, foreground segmentation, ridge amplification."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.filters import apply_hysteresis_threshold

from .errors import DimensionMismatch, EmptyForeground
from .imgproc import (as_real, convex_hull, convolve2d, dilate, erode, fill_holes, gaussian_blur,
                      keep_largest, label, rank_filter, rescale_linear, to_gray)


@dataclass(frozen=True)
class EqualizeResult:
    image: np.ndarray
    threshold: float


@dataclass(frozen=True)
class LinePair:
    """Top and bottom cut lines ``row = m * col + q``; ``None`` where no line was found."""
    top: tuple[float, float] | None
    bottom: tuple[float, float] | None


# -- equalisation ----------------------------------------------------------------

def histogram_valley(hist, sigma: float = 3.0) -> float | None:
    """Deepest point of the smoothed histogram between its two highest modes.

    A flat valley floor resolves to the middle of the plateau.  ``None`` when the
    smoothed histogram has fewer than two modes.
    """
    h = ndimage.gaussian_filter1d(np.asarray(hist, dtype=np.float64), sigma, mode="constant")
    padded = np.concatenate([[-1.0], h, [-1.0]])
    # a mode is the left end of a plateau strictly higher than both neighbours
    peaks = []
    i = 1
    while i <= len(h):
        j = i
        while j + 1 <= len(h) and padded[j + 1] == padded[i]:
            j += 1
        if padded[i] > padded[i - 1] and padded[i] > padded[j + 1]:
            peaks.append(((i + j) // 2 - 1, padded[i]))
        i = j + 1
    if len(peaks) < 2:
        return None
    top = sorted(peaks, key=lambda p: (-p[1], p[0]))[:2]
    a, b = sorted(p[0] for p in top)
    seg = h[a:b + 1]
    floor = np.flatnonzero(seg == seg.min())
    return float(a + floor.mean())


def equalize(image, hist_sigma: float = 3.0, clip: float = 8.0) -> EqualizeResult:
    """Stretch to the full range, find the ridge/valley boundary and map it to 128.

    Grey levels within ``clip`` of either end are flattened to 0 or 255.
    """
    img = as_real(image)
    if img.size == 0 or img.min() == img.max():
        return EqualizeResult(to_gray(img), 128.0)
    scaled = rescale_linear(img, 0, 255)
    hist, _ = np.histogram(np.rint(scaled), bins=256, range=(-0.5, 255.5))
    lo, hi = float(clip), 255.0 - clip
    t = histogram_valley(hist, hist_sigma)
    if t is None:
        t = float(scaled.mean())
    t = min(max(t, lo + 1), hi - 1)
    out = np.where(scaled <= t,
                   128.0 * (scaled - lo) / (t - lo),
                   128.0 + 127.0 * (scaled - t) / (hi - t))
    return EqualizeResult(to_gray(np.clip(out, 0, 255)), t)


# -- border removal ----------------------------------------------------------------

def oblique_kernel(width: int) -> np.ndarray:
    """5 x width kernel responding to near-horizontal lines; width forced odd."""
    width = int(width)
    if width % 2 == 0:
        width += 1
    return np.outer([1.0, 1.0, 0.0, -1.0, -1.0], np.ones(width))


def default_oblique_kernel(n_cols: int) -> np.ndarray:
    return oblique_kernel(math.ceil(n_cols / 4) + 1)


def variation_mask(image, tau_V: float) -> np.ndarray:
    """Clear low-variation rows and columns, scanning from each border until the first busy line."""
    img = as_real(image)
    h, w = img.shape
    mask = np.ones((h, w), dtype=bool)
    row_var = img.max(axis=1) - img.min(axis=1)
    col_var = img.max(axis=0) - img.min(axis=0)
    for var, set_false in ((row_var, lambda k: mask.__setitem__((k, slice(None)), False)),
                           (col_var, lambda k: mask.__setitem__((slice(None), k), False))):
        n = len(var)
        for order in (range(n), range(n - 1, -1, -1)):
            for k in order:
                if var[k] >= tau_V:
                    break
                set_false(k)
    return mask


def _fit_line(cols, rows, min_points: int):
    """Least-squares line with two rounds of residual trimming; None if too few points survive."""
    cols = np.asarray(cols, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    keep = np.ones(len(cols), dtype=bool)
    for _ in range(3):
        if keep.sum() < max(2, min_points):
            return None
        m, q = np.polyfit(cols[keep], rows[keep], 1)
        resid = np.abs(rows - (m * cols + q))
        keep = resid <= max(2.0, 3.0 * np.median(resid[keep]))
    if keep.sum() < max(2, min_points):
        return None
    m, q = np.polyfit(cols[keep], rows[keep], 1)
    return float(m), float(q)


def fit_border_lines(response, strength: float) -> LinePair:
    """Fit the top and bottom lines to the per-column strongest responses in the outer thirds.

    Columns whose peak is below ``strength`` are ignored; at least half the columns
    must take part, otherwise that side gets no line.
    """
    r = np.abs(np.asarray(response, dtype=np.float64))
    h, w = r.shape
    # a thin line answers on both flanks; summing over the kernel height centres the peak on it
    located = ndimage.uniform_filter1d(r, size=5, axis=0, mode="nearest")
    third = max(1, h // 3)
    cols = np.arange(w)
    lines = []
    for lo, hi in ((0, third), (h - third, h)):
        arg = located[lo:hi].argmax(axis=0)
        strong = r[lo:hi].max(axis=0) >= strength
        if strong.sum() < w / 2:
            lines.append(None)
            continue
        lines.append(_fit_line(cols[strong], arg[strong] + lo, w // 2))
    return LinePair(*lines)


def _line_cut(shape, lines: LinePair) -> np.ndarray:
    h, w = shape
    i, j = np.mgrid[0:h, 0:w].astype(np.float64)
    keep = np.ones(shape, dtype=bool)
    if lines.top is not None:
        m, q = lines.top
        keep &= ~(i < m * j + q)
    if lines.bottom is not None:
        m, q = lines.bottom
        keep &= ~(i > m * j + q)
    return keep


def remove_border(image, tau_V: float = 50.0, oblique_kernel=None,
                  return_lines: bool = False):
    """Border mask: low-variation outer lines and the regions beyond near-horizontal and
    near-vertical straight lines are false.

    ``oblique_kernel`` is used for the horizontal pass and transposed for the vertical
    one; by default its width follows the image side (a quarter of it, plus one).
    """
    img = as_real(image)
    mask = variation_mask(img, tau_V)
    found = []
    for transposed in (False, True):
        work = img.T if transposed else img
        k = default_oblique_kernel(work.shape[1]) if oblique_kernel is None else np.asarray(oblique_kernel)
        if k.shape[0] > work.shape[0] or k.shape[1] > work.shape[1]:
            found.append(LinePair(None, None))
            continue
        resp = convolve2d(work, k, "clamp")
        # a step of tau_V across the full kernel would reach 2 * tau_V * width
        lines = fit_border_lines(resp, 2.0 * tau_V * k.shape[1])
        found.append(lines)
        cut = _line_cut(work.shape, lines)
        mask &= cut.T if transposed else cut
    return (mask, found[0], found[1]) if return_lines else mask


# -- segmentation ----------------------------------------------------------------

def _clean(mask, params) -> np.ndarray:
    m = dilate(mask, params.seg_dilate)
    m = erode(m, params.seg_erode)
    m = keep_largest(m, params.seg_keep)
    m = fill_holes(m)
    return dilate(m, params.seg_final_dilate)


def ridge_darkness(equalized, params) -> np.ndarray:
    """Median, blur, minimum filter, then a squared rescale that pushes faint greys to white."""
    img = rank_filter(as_real(equalized), params.median_radius, "median")
    img = gaussian_blur(img, params.blur_sigma)
    img = rank_filter(img, params.min_radius, "min")
    if img.max() == img.min():
        # nothing to stretch: a blank image must stay as light as it is
        return img
    unit = rescale_linear(img, 0.0, 1.0)
    return rescale_linear(unit * unit, 0.0, 255.0)


def edge_mask(equalized, params) -> np.ndarray:
    """Gradient-magnitude edges with hysteresis (thresholds relative to the peak magnitude)."""
    img = gaussian_blur(as_real(equalized), params.edge_sigma)
    mag = np.hypot(ndimage.sobel(img, axis=0, mode="nearest"), ndimage.sobel(img, axis=1, mode="nearest"))
    peak = mag.max()
    if peak == 0:
        return np.zeros(mag.shape, dtype=bool)
    return apply_hysteresis_threshold(mag / peak, params.edge_low, params.edge_high)


def dense_edges(edges, params) -> np.ndarray:
    """Edge components whose mean blurred edge density exceeds ``tau_edge``."""
    edges = np.asarray(edges, dtype=bool)
    if not edges.any():
        return edges
    density = gaussian_blur(edges.astype(np.float64), params.edge_density_sigma, border="zero")
    density /= density.max()
    labels, n = label(edges)
    means = ndimage.mean(density, labels, index=np.arange(1, n + 1))
    keep = np.concatenate([[False], np.asarray(means) > params.tau_edge])
    return keep[labels]


def segment(equalized, border_mask, params, return_parts: bool = False):
    """Foreground mask: convex hull of the dark-region mask and the dense-edge mask."""
    eq = as_real(equalized)
    border_mask = np.asarray(border_mask, dtype=bool)
    if eq.shape != border_mask.shape:
        raise DimensionMismatch(f"image {eq.shape} and border mask {border_mask.shape} differ")
    dark = ridge_darkness(eq, params)
    M_0 = dark < params.tau0
    M_1 = _clean(M_0 & border_mask, params)
    M_2 = _clean(dense_edges(edge_mask(eq, params) & border_mask, params), params)
    M_F = convex_hull(M_1 | M_2)
    if not M_F.any():
        raise EmptyForeground("segmentation left no foreground")
    return (M_F, M_1, M_2) if return_parts else M_F


# -- ridge amplification ------------------------------------------------------------

def _ramp(values, t1: float, t2: float) -> np.ndarray:
    return np.clip((values - t1) * (255.0 / (t2 - t1)), 0.0, 255.0)


def amplify_ridges(equalized, mask, params) -> np.ndarray:
    """Stretch every pixel between its rescaled local minimum and maximum; background is white."""
    eq = as_real(equalized)
    mask = np.asarray(mask, dtype=bool)
    if eq.shape != mask.shape:
        raise DimensionMismatch(f"image {eq.shape} and mask {mask.shape} differ")
    I_R = np.where(mask, eq, 255.0)
    I_M = rank_filter(I_R, params.amp_radius, "max")
    I_m = rank_filter(I_R, params.amp_radius, "min")
    I_M2 = _ramp(I_M, params.t_M1, params.t_M2)
    I_m2 = _ramp(I_m, params.t_m1, params.t_m2)
    span = I_M - I_m
    flat = span == 0
    ratio = np.where(flat, 0.0, (I_R - I_m) / np.where(flat, 1.0, span))
    out = I_m2 + ratio * (I_M2 - I_m2)
    return to_gray(np.where(mask, out, 255.0))


def preprocess(image, params):
    """Equalise, remove the border, segment and amplify; returns ``(equalized, M_F, amplified, threshold)``."""
    eq = equalize(image, params.hist_sigma, params.clip)
    border = remove_border(eq.image, params.tau_V)
    M_F = segment(eq.image, border, params)
    return eq.image, M_F, amplify_ridges(eq.image, M_F, params), eq.threshold
