"""Orientation fields, the directional gradient filter bank and the field estimator.

An orientation field is a ``complex128`` array.  The phase, kept canonical in
``[0, pi)``, is the ridge orientation measured from the +column axis towards
+row; the magnitude is the reliability.  Averaging orientations is only
meaningful for the *doubled* representation (angle times two), so every
smoothing or interpolation step goes through :func:`double_field` and back
through :func:`halve_field`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .imgproc import as_real, convolve2d, gaussian_blur


def canonicalize(field) -> np.ndarray:
    """Flip every value into the closed-open upper half plane (phase in [0, pi))."""
    z = np.array(field, dtype=np.complex128, copy=True)
    flip = (z.imag < 0) | ((z.imag == 0) & (z.real < 0))
    z[flip] = -z[flip]
    # drop negative zeros so that phase 0 is stored as (+re, +0)
    z.imag[z.imag == 0] = 0.0
    return z


def from_angle(theta, magnitude=1.0) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    return canonicalize(np.asarray(magnitude, dtype=np.float64) * np.exp(1j * theta))


def phase(field) -> np.ndarray:
    """Orientation angle in [0, pi)."""
    a = np.angle(canonicalize(field))
    return np.where(a >= np.pi, 0.0, a)


def unit(field) -> np.ndarray:
    """Same orientations with unit magnitude; zero pixels stay zero."""
    z = np.asarray(field, dtype=np.complex128)
    mag = np.abs(z)
    out = np.zeros_like(z)
    nz = mag > 0
    out[nz] = z[nz] / mag[nz]
    return out


def doubled_distance(a, b) -> np.ndarray:
    """Half the distance between unit doubled representatives, i.e. |sin(angle difference)|."""
    return np.abs(double_field(unit(a)) - double_field(unit(b))) / 2


def double_field(field) -> np.ndarray:
    """z -> z**2 / |z|: doubles the angle and keeps the magnitude."""
    z = np.asarray(field, dtype=np.complex128)
    mag = np.abs(z)
    out = np.zeros_like(z)
    nz = mag > 0
    out[nz] = z[nz] * z[nz] / mag[nz]
    return out


def halve_field(field) -> np.ndarray:
    """Inverse of :func:`double_field`: halves the angle, keeps the magnitude, canonical phase."""
    w = np.asarray(field, dtype=np.complex128)
    # |sqrt(w)| = sqrt(|w|), so scaling by sqrt(|w|) restores the magnitude; zeros stay zero
    return canonicalize(np.sqrt(w) * np.sqrt(np.abs(w)))


def smooth_field(field, sigma: float, border: str = "clamp") -> np.ndarray:
    """Gaussian smoothing carried out on the doubled field."""
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    d = double_field(field)
    blurred = gaussian_blur(d.real, sigma, border) + 1j * gaussian_blur(d.imag, sigma, border)
    return halve_field(blurred)


def normalize_field(field) -> np.ndarray:
    """Divide every magnitude by the global maximum; the all-zero field is returned as is."""
    z = np.array(field, dtype=np.complex128, copy=True)
    peak = np.abs(z).max() if z.size else 0.0
    if peak > 0:
        z /= peak
    return z


def conjugate(field) -> np.ndarray:
    """Mirror orientations (theta -> pi - theta); swaps loops and deltas."""
    return canonicalize(np.conj(np.asarray(field, dtype=np.complex128)))


# -- interpolation -------------------------------------------------------------

def bilinear(values, xs, ys) -> np.ndarray:
    """Bilinear interpolation at (x=col, y=row) positions; neighbours outside the raster read as 0."""
    v = np.asarray(values)
    h, w = v.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros(np.broadcast(xs, ys).shape, dtype=v.dtype if np.iscomplexobj(v) else np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            yi = y0 + dy
            ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = np.where(ok, v[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], 0)
            out = out + (wy * wx) * vals
    return out


def _shifted(values, di: int, dj: int) -> np.ndarray:
    """``values[i + di, j + dj]`` with zeros where that falls outside the raster."""
    h, w = values.shape
    out = np.zeros_like(values)
    if abs(di) >= h or abs(dj) >= w:
        return out
    src = values[max(di, 0):h + min(di, 0), max(dj, 0):w + min(dj, 0)]
    out[max(-di, 0):h + min(-di, 0), max(-dj, 0):w + min(-dj, 0)] = src
    return out


def bilinear_offset(values, dx: float, dy: float) -> np.ndarray:
    """:func:`bilinear` sampled at every pixel shifted by the constant offset (dx, dy).

    Same weights and summation order as :func:`bilinear`; the fractional parts are taken from
    the offset alone, so results agree with it to rounding.
    """
    v = np.asarray(values)
    x0 = math.floor(dx)
    y0 = math.floor(dy)
    fx = dx - x0
    fy = dy - y0
    out = np.zeros(v.shape, dtype=v.dtype if np.iscomplexobj(v) else np.float64)
    for ddy, wy in ((0, 1.0 - fy), (1, fy)):
        for ddx, wx in ((0, 1.0 - fx), (1, fx)):
            out = out + (wy * wx) * _shifted(v, y0 + ddy, x0 + ddx)
    return out


def sample_field(field, xs, ys, doubled=None) -> np.ndarray:
    """Sample an orientation field at real positions, interpolating in doubled space.

    ``doubled`` may carry a precomputed ``double_field(field)``.
    """
    d = double_field(field) if doubled is None else doubled
    return halve_field(bilinear(d, xs, ys))


# -- filter bank -------------------------------------------------------------

@dataclass(frozen=True)
class FilterBank:
    r: int
    sigma1: float
    alpha1: float
    sigma2: float
    alpha2: float
    n_angles: int
    angles: np.ndarray
    kernels: tuple
    base: np.ndarray

    def __len__(self):
        return self.n_angles


def base_kernel(r: int, sigma1: float, alpha1: float, sigma2: float, alpha2: float) -> np.ndarray:
    """Gaussian-derivative profile tabulated on the r x r grid, indexed ``[s, t]``.

    The derivative coordinate ``s`` runs along axis 0, the smoothing coordinate ``t`` along axis 1,
    both centred so that the middle sample sits at 0.
    """
    d = np.arange(1, r + 1, dtype=np.float64) - (r + 1) / 2
    across = d * np.exp(-np.abs(d / sigma1) ** (2 * alpha1))
    along = np.exp(-np.abs(d / sigma2) ** (2 * alpha2))
    return np.outer(across, along)


def rotate_kernel(base: np.ndarray, theta: float) -> np.ndarray:
    """Sample ``base`` at rotated coordinates; output indexed ``[row, col]`` like any kernel."""
    r = base.shape[0]
    h = (r - 1) // 2
    y, x = np.mgrid[-h:h + 1, -h:h + 1].astype(np.float64)
    c, s = math.cos(theta), math.sin(theta)
    sc = x * c + y * s
    tc = -x * s + y * c
    # base is indexed [s + h, t + h]; bilinear() takes (x=col, y=row) = (t, s)
    return bilinear(base, tc + h, sc + h)


def build_filter_bank(r: int, sigma1: float, alpha1: float, sigma2: float, alpha2: float,
                      n_angles: int) -> FilterBank:
    """Directional gradient kernels at ``n_angles`` equally spaced angles in [0, pi)."""
    for name, v in (("sigma1", sigma1), ("alpha1", alpha1), ("sigma2", sigma2), ("alpha2", alpha2)):
        if not v > 0:
            raise InvalidParameter(f"{name} must be positive, got {v}")
    if n_angles < 4:
        raise InvalidParameter(f"need at least 4 angles, got {n_angles}")
    r = int(math.ceil(r))
    if r < 3:
        raise InvalidParameter(f"filter radius must be >= 3, got {r}")
    if r % 2 == 0:
        r += 1
    base = base_kernel(r, sigma1, alpha1, sigma2, alpha2)
    angles = np.arange(n_angles) * (np.pi / n_angles)
    kernels = tuple(rotate_kernel(base, float(t)) for t in angles)
    return FilterBank(r, sigma1, alpha1, sigma2, alpha2, n_angles, angles, kernels, base)


def bank_from_params(params, r=None) -> FilterBank:
    return build_filter_bank(params.r if r is None else r, params.sigma1, params.alpha1,
                             params.sigma2, params.alpha2, params.N_A)


def _trim(kernel: np.ndarray) -> np.ndarray:
    # dropping an all-zero outer ring leaves the convolution unchanged
    k = kernel
    while k.shape[0] > 1 and k.shape[1] > 1 and not (k[0].any() or k[-1].any()
                                                      or k[:, 0].any() or k[:, -1].any()):
        k = k[1:-1, 1:-1]
    return k


def orientation_weights(image, bank: FilterBank, response_sigma: float,
                        border: str = "clamp") -> np.ndarray:
    """Blurred absolute filter responses, stacked as ``(n_angles, h, w)``."""
    img = as_real(image)
    out = np.empty((bank.n_angles,) + img.shape)
    scale = float(np.abs(img).max()) if img.size else 0.0
    for k, kernel in enumerate(bank.kernels):
        resp = convolve2d(img, _trim(kernel), border)
        # the kernel sums are zero only to rounding; a flat patch must give no response at all
        resp[np.abs(resp) <= 1e-9 * scale * np.abs(kernel).sum()] = 0.0
        out[k] = gaussian_blur(np.abs(resp), response_sigma, border)
    return out


def accumulate(weights: np.ndarray, angles: np.ndarray, strict: bool = False) -> np.ndarray:
    """Weighted mean of the ridge orientations (angle + pi/2) in doubled space.

    ``strict=True`` averages the single-angle representatives instead, which cancels
    orientations near 0 and near pi against each other.
    """
    ridge = np.mod(angles + np.pi / 2, np.pi)
    total = weights.sum(axis=0)
    factor = np.exp((1j if strict else 2j) * ridge)
    # fixed k order keeps the sum bit-deterministic
    acc = np.zeros(weights.shape[1:], dtype=np.complex128)
    for k in range(weights.shape[0]):
        acc += weights[k] * factor[k]
    out = np.zeros_like(acc)
    ok = total > 0
    out[ok] = acc[ok] / total[ok]
    return canonicalize(out) if strict else halve_field(out)


def estimate_orientation(image, bank: FilterBank, smooth_sigma: float | None = None, *,
                         response_sigma: float | None = None, strict: bool = False,
                         border: str = "clamp") -> np.ndarray:
    """Estimate the orientation field of ``image`` with the directional filter bank.

    Parameters
    ----------
    image : array
        Grey image.
    bank : FilterBank
    smooth_sigma : float, optional
        Sigma of the doubled-space smoothing of the combined field; ``r / 3`` by default.
    response_sigma : float, optional
        Sigma of the blur applied to each absolute filter response; ``r / 3`` by default.
    strict : bool
        Combine single-angle representatives rather than doubled ones.

    Returns
    -------
    complex ndarray
        Field with magnitudes normalised to [0, 1].
    """
    smooth_sigma = bank.r / 3 if smooth_sigma is None else smooth_sigma
    response_sigma = bank.r / 3 if response_sigma is None else response_sigma
    weights = orientation_weights(image, bank, response_sigma, border)
    field = accumulate(weights, bank.angles, strict)
    return normalize_field(smooth_field(field, smooth_sigma, border))


def estimate_from_params(image, params, r=None) -> np.ndarray:
    bank = bank_from_params(params, r)
    sigma = params.smooth_ratio * bank.r
    return estimate_orientation(image, bank, sigma, response_sigma=sigma, strict=params.strict_eq5)
