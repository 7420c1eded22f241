"""Raster primitives shared by all stages.

Rasters are plain numpy arrays indexed ``[row, col]``:

* grey images are ``uint8`` arrays,
* real maps are ``float64`` arrays,
* binary masks are ``bool`` arrays,
* kernels are ``float64`` arrays with odd height and width, anchored at the centre.
"""
from __future__ import annotations

import math
from typing import Literal

import numpy as np
from scipy import ndimage, signal

from .errors import DimensionMismatch, InvalidParameter

Border = Literal["clamp", "zero"]

_PAD_MODE = {"clamp": "edge", "zero": "constant"}
_NDI_MODE = {"clamp": "nearest", "zero": "constant"}

# 8-connectivity for foreground components
_EIGHT = np.ones((3, 3), dtype=bool)


def _check_border(border: str) -> None:
    if border not in _PAD_MODE:
        raise InvalidParameter(f"unknown border policy {border!r}")


def as_real(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidParameter("expected a non-empty 2-D raster")
    return arr


def to_gray(values) -> np.ndarray:
    """Round and clip a real map into an 8-bit grey image."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64)), 0, 255).astype(np.uint8)


def check_kernel(kernel) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise InvalidParameter(f"kernel must be 2-D with odd sides, got shape {k.shape}")
    return k


def convolve2d(image, kernel, border: Border = "clamp") -> np.ndarray:
    """Convolve ``image`` with an odd-sized ``kernel``; the output keeps the input shape.

    ``border`` is ``"clamp"`` (replicate the edge) or ``"zero"``.
    """
    _check_border(border)
    img = as_real(image)
    k = check_kernel(kernel)
    kh, kw = k.shape
    if kh > img.shape[0] or kw > img.shape[1]:
        raise DimensionMismatch(f"kernel {k.shape} exceeds image {img.shape}")
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img, ((ph, ph), (pw, pw)), mode=_PAD_MODE[border])
    return signal.convolve(padded, k, mode="valid")


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    radius = max(1, math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(image, sigma: float, border: Border = "clamp") -> np.ndarray:
    """Separable Gaussian blur truncated at ``ceil(3 * sigma)``."""
    _check_border(border)
    k = gaussian_kernel1d(sigma)
    img = as_real(image)
    mode = _NDI_MODE[border]
    out = ndimage.correlate1d(img, k, axis=0, mode=mode, cval=0.0)
    return ndimage.correlate1d(out, k, axis=1, mode=mode, cval=0.0)


def disk(radius: float) -> np.ndarray:
    """Circular structuring element: offsets at Euclidean distance <= radius."""
    if radius < 1:
        raise InvalidParameter(f"radius must be >= 1, got {radius}")
    n = int(math.floor(radius))
    y, x = np.mgrid[-n:n + 1, -n:n + 1]
    return x * x + y * y <= radius * radius


def rank_filter(image, radius: float, rank: Literal["min", "median", "max"]) -> np.ndarray:
    """Order-statistic filter over a clamped circular neighbourhood."""
    fp = disk(radius)
    img = np.asarray(image)
    if rank == "min":
        return ndimage.minimum_filter(img, footprint=fp, mode="nearest")
    if rank == "max":
        return ndimage.maximum_filter(img, footprint=fp, mode="nearest")
    if rank == "median":
        return ndimage.median_filter(img, footprint=fp, mode="nearest")
    raise InvalidParameter(f"unknown rank {rank!r}")


def dilate(mask, radius: float) -> np.ndarray:
    return ndimage.binary_dilation(np.asarray(mask, dtype=bool), structure=disk(radius), border_value=0)


def erode(mask, radius: float) -> np.ndarray:
    # pixels outside the raster count as false, so masks touching the edge shrink too
    return ndimage.binary_erosion(np.asarray(mask, dtype=bool), structure=disk(radius), border_value=0)


def morphology(mask, op: Literal["dilate", "erode"], radius: float) -> np.ndarray:
    if op == "dilate":
        return dilate(mask, radius)
    if op == "erode":
        return erode(mask, radius)
    raise InvalidParameter(f"unknown morphology op {op!r}")


def label(mask) -> tuple[np.ndarray, int]:
    """8-connected labelling; labels are assigned in raster scan order."""
    return ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT)


def filter_min_area(mask, min_area: float) -> np.ndarray:
    labels, n = label(mask)
    if n == 0:
        return np.zeros_like(labels, dtype=bool)
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    return keep[labels]


def keep_largest(mask, n: int = 1) -> np.ndarray:
    """Keep the ``n`` largest components; ties go to the component met first in scan order."""
    labels, count = label(mask)
    if count == 0 or n <= 0:
        return np.zeros_like(labels, dtype=bool)
    areas = np.bincount(labels.ravel())[1:]
    # stable sort on -area keeps scan order among equal areas
    order = np.argsort(-areas, kind="stable")[:n]
    keep = np.zeros(count + 1, dtype=bool)
    keep[order + 1] = True
    return keep[labels]


def fill_holes(mask) -> np.ndarray:
    # default structure of binary_fill_holes is the 4-connected cross for the background
    return ndimage.binary_fill_holes(np.asarray(mask, dtype=bool))


def components(mask, mode: str, value: float | None = None) -> np.ndarray:
    """Dispatch on ``mode``: ``filter_min_area`` (value = area), ``keep_largest`` (value = n), ``fill_holes``."""
    if mode == "filter_min_area":
        return filter_min_area(mask, 0 if value is None else value)
    if mode == "keep_largest":
        return keep_largest(mask, 1 if value is None else int(value))
    if mode == "fill_holes":
        return fill_holes(mask)
    raise InvalidParameter(f"unknown components mode {mode!r}")


def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_vertices(points) -> list[tuple[int, int]]:
    """Monotone-chain convex hull of integer points, counter-clockwise, collinear points dropped."""
    pts = sorted(set(map(tuple, points)))
    if len(pts) <= 2:
        return pts
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def convex_hull(mask) -> np.ndarray:
    """Rasterise the convex hull of all true pixel centres.

    Pixel centres are integer points, so the inclusion test is exact integer arithmetic.
    """
    m = np.asarray(mask, dtype=bool)
    out = np.zeros_like(m)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        return out
    # the hull of a set equals the hull of its per-row extreme pixels
    pts = []
    for r in rows:
        cols = np.flatnonzero(m[r])
        pts.append((int(r), int(cols[0])))
        pts.append((int(r), int(cols[-1])))
    hull = hull_vertices(pts)
    r0, r1 = hull[0][0], hull[0][0]
    c0, c1 = hull[0][1], hull[0][1]
    for r, c in hull:
        r0, r1, c0, c1 = min(r0, r), max(r1, r), min(c0, c), max(c1, c)
    rr, cc = np.mgrid[r0:r1 + 1, c0:c1 + 1].astype(np.int64)
    inside = np.ones(rr.shape, dtype=bool)
    if len(hull) == 1:
        pass
    elif len(hull) == 2:
        (ar, ac), (br, bc) = hull
        inside &= (br - ar) * (cc - ac) - (bc - ac) * (rr - ar) == 0
    else:
        for (ar, ac), (br, bc) in zip(hull, hull[1:] + hull[:1]):
            inside &= (br - ar) * (cc - ac) - (bc - ac) * (rr - ar) >= 0
    out[r0:r1 + 1, c0:c1 + 1] = inside
    return out


def rescale_linear(image, out_lo: float, out_hi: float) -> np.ndarray:
    """Affine map sending min -> ``out_lo`` and max -> ``out_hi``; constant maps go to ``out_lo``."""
    arr = as_real(image)
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.full_like(arr, float(out_lo))
    return out_lo + (arr - lo) * ((out_hi - out_lo) / (hi - lo))
