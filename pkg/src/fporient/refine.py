"""Circle-sampling operators (adjuster, smoother, drifters) and the refinement pipeline.

Positions are ``(x, y)`` = (column, row).  Every operator samples the field
on a circle around each pixel; off-grid samples are interpolated in doubled
space and anything outside the raster reads as zero.

Notation used below, per sample ``k`` with value ``F_k`` and circle point ``p_k``:

* ``n_k = Re[F_k conj(p_k)] / (|F_k| |p_k|)``   radial alignment, ``w_k = n_k / sum(n)``
* ``q_k = Im[F_k conj(p_k)] / (|F_k| |p_k|)``   tangential alignment, ``v_k = q_k / sum(q)``
* ``m_k = Re[F_k conj(F_0)] / (|F_k| |F_0|)``   alignment with the centre, ``u_k = m_k / sum(m)``
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateField, DegenerateWeights, IterationCapExceeded, InvalidParameter, ZeroAnchor
from .imgproc import dilate, erode, filter_min_area, gaussian_blur
from .orientation import (bilinear, bilinear_offset, canonicalize, double_field, doubled_distance,
                          estimate_from_params, halve_field, unit)


@dataclass(frozen=True)
class CirclePattern:
    R: float
    points: np.ndarray  # (N_C, 2) offsets as (x, y)
    p: np.ndarray  # complex representatives x + iy

    @property
    def n(self) -> int:
        return len(self.p)


def default_count(R: float) -> int:
    return max(8, int(round(2 * math.pi * R)))


def circle_pattern(R: float, n: int | None = None) -> CirclePattern:
    """``n`` points equally spaced on the circle of radius ``R``, starting on the +x axis."""
    if not R >= 1:
        raise InvalidParameter(f"circle radius must be >= 1, got {R}")
    n = default_count(R) if not n else int(n)
    if n < 2:
        raise InvalidParameter(f"need at least 2 circle points, got {n}")
    ang = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([R * np.cos(ang), R * np.sin(ang)])
    return CirclePattern(float(R), pts, pts[:, 0] + 1j * pts[:, 1])


def pattern_for(scale: float, T_s: float, params) -> CirclePattern:
    R = max(1, int(round(scale * T_s)))
    return circle_pattern(R, params.N_C or None)


# -- single-pixel weights --------------------------------------------------------

def circle_samples(field, x, pattern: CirclePattern, doubled=None) -> np.ndarray:
    """Field values at ``x + r_k`` for one position ``x = (x, y)``."""
    d = double_field(field) if doubled is None else doubled
    xs = x[0] + pattern.points[:, 0]
    ys = x[1] + pattern.points[:, 1]
    return halve_field(bilinear(d, xs, ys))


def _cos_sin(samples, ref):
    """Re and Im of ``samples * conj(ref) / (|samples| |ref|)``; zero samples give 0."""
    prod = samples * np.conj(ref)
    den = np.abs(samples) * np.abs(ref)
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, prod.real / safe, 0.0), np.where(den > 0, prod.imag / safe, 0.0)


def _normalise(num, eps):
    total = num.sum()
    if abs(total) < eps:
        raise DegenerateWeights(f"weight normaliser {total:.3g} below {eps}")
    return num / total


def radial_weights(field, x, pattern: CirclePattern, eps: float = 1e-6) -> np.ndarray:
    n, _ = _cos_sin(circle_samples(field, x, pattern), pattern.p)
    return _normalise(n, eps)


def tangential_weights(field, x, pattern: CirclePattern, eps: float = 1e-6) -> np.ndarray:
    _, q = _cos_sin(circle_samples(field, x, pattern), pattern.p)
    return _normalise(q, eps)


def self_weights(field, x, pattern: CirclePattern, eps: float = 1e-6) -> np.ndarray:
    f = np.asarray(field)
    anchor = f[int(round(x[1])), int(round(x[0]))]
    if anchor == 0:
        raise ZeroAnchor(f"field vanishes at {x}")
    m, _ = _cos_sin(circle_samples(field, x, pattern), anchor)
    return _normalise(m, eps)


# -- whole-field accumulation --------------------------------------------------

@dataclass
class _Sums:
    """Per-pixel sums over the circle, for the pixels selected by ``rows``/``cols``."""
    F0: np.ndarray
    n: np.ndarray  # sum n_k
    q: np.ndarray  # sum q_k
    m: np.ndarray  # sum m_k
    radial: np.ndarray  # sum sgn(n_k) n_k^2 F_k
    smooth: np.ndarray  # sum sgn(m_k) n_k^2 F_k
    tangent: np.ndarray  # sum n_k F_k
    normal: np.ndarray  # sum q_k F_k


def _terms(Fk, phat, u0, radial: bool, smooth: bool, drift: bool) -> dict:
    """Per-sample contributions to the circle sums (any matching shapes)."""
    uk = unit(Fk)
    a = uk * np.conj(phat)
    nk = a.real
    out = {"n": nk}
    if radial or smooth:
        sq = nk * nk * Fk
    if radial:
        out["radial"] = np.sign(nk) * sq
    if smooth:
        mk = (uk * u0).real
        out["m"] = mk
        out["smooth"] = np.sign(mk) * sq
    if drift:
        out["q"] = a.imag
        out["tangent"] = nk * Fk
        out["normal"] = a.imag * Fk
    return out


# pixels per chunk when every circle sample of a pixel is gathered at once
_CHUNK = 8192


def _accumulate(field, pattern: CirclePattern, mask=None, kind: str = "all") -> tuple[_Sums, tuple]:
    """Circle sums for the pixels selected by ``mask``.

    ``kind`` limits the work to what one operator needs: ``"adjuster"``,
    ``"smoother"``, ``"drifter"`` or ``"all"``; the other sums stay zero.
    """
    f = np.asarray(field, dtype=np.complex128)
    h, w = f.shape
    if mask is None:
        rows, cols = np.indices((h, w))
        rows, cols = rows.ravel(), cols.ravel()
    else:
        rows, cols = np.nonzero(np.asarray(mask, dtype=bool))
    flags = (kind in ("adjuster", "all"), kind in ("smoother", "all"), kind in ("drifter", "all"))
    d = double_field(f)
    F0 = f[rows, cols]
    u0 = np.conj(unit(F0))
    z = np.zeros(rows.shape)
    zc = np.zeros(rows.shape, dtype=np.complex128)
    sums = _Sums(F0, z.copy(), z.copy(), z.copy(), zc.copy(), zc.copy(), zc.copy(), zc.copy())
    phat = pattern.p / np.abs(pattern.p)
    if rows.size * 4 >= h * w:
        # shifting whole rasters beats gathering once the selection is a sizeable part of the image;
        # fixed k order keeps the sums bit-deterministic
        for k in range(pattern.n):
            dx, dy = pattern.points[k]
            Fk = halve_field(bilinear_offset(d, dx, dy)[rows, cols])
            for name, v in _terms(Fk, phat[k], u0, *flags).items():
                getattr(sums, name)[...] += v
    else:
        for lo in range(0, rows.size, _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            xs = cols[sl, None] + pattern.points[None, :, 0]
            ys = rows[sl, None] + pattern.points[None, :, 1]
            Fk = halve_field(bilinear(d, xs, ys))
            for name, v in _terms(Fk, phat[None, :], u0[sl, None], *flags).items():
                getattr(sums, name)[sl] = v.sum(axis=1)
    return sums, (rows, cols)


def _relax(F0, G, s):
    """Blend the squares, take the root's phase and the larger of the two magnitudes."""
    sq = (1 - s) * F0 * F0 + s * G * G
    root = halve_field(sq)
    mag = np.maximum(np.abs(F0), np.abs(G))
    return unit(root) * mag, sq != 0


def _strength_at(strength, rows, cols):
    if np.ndim(strength) == 0:
        return float(strength)
    return np.asarray(strength, dtype=np.float64)[rows, cols]


def adjuster_response(field, pattern: CirclePattern, eps: float = 1e-6, mask=None):
    """``G_A`` and a validity flag for every selected pixel (flattened over ``mask``)."""
    sums, idx = _accumulate(field, pattern, mask, "adjuster")
    ok = np.abs(sums.n) >= eps
    safe = np.where(ok, sums.n, 1.0)
    G = np.where(ok, np.sign(safe) * sums.radial / (safe * safe), 0)
    return G, ok, sums, idx


def adjuster(field, pattern: CirclePattern, strength=0.5, eps: float = 1e-6, mask=None) -> np.ndarray:
    """Adjuster: pull each orientation towards the radially aligned circle average.

    ``strength`` is the relaxation ``s``, a scalar or a per-pixel map in [0, 1].
    Pixels with degenerate radial weights, or outside ``mask``, are returned unchanged.
    """
    f = canonicalize(field)
    G, ok, sums, (rows, cols) = adjuster_response(f, pattern, eps, mask)
    s = _strength_at(strength, rows, cols)
    out_vals, nonzero = _relax(sums.F0, G, s)
    keep = ok & nonzero
    out = f.copy()
    out[rows[keep], cols[keep]] = canonicalize(out_vals[keep])
    return out


def smoother_response(field, pattern: CirclePattern, eps: float = 1e-6, mask=None):
    sums, idx = _accumulate(field, pattern, mask, "smoother")
    ok = (np.abs(sums.n) >= eps) & (np.abs(sums.m) >= eps) & (np.abs(sums.F0) > 0)
    safe = np.where(ok, sums.n, 1.0)
    G = np.where(ok, np.sign(np.where(ok, sums.m, 1.0)) * sums.smooth / (safe * safe), 0)
    return G, ok, sums, idx


def smoother(field, pattern: CirclePattern, s: float = 0.5, eps: float = 1e-6, mask=None) -> np.ndarray:
    """Smoother: relax each orientation towards the neighbours flipped onto the centre's side.

    Degenerate pixels, zero anchors and pixels outside ``mask`` pass through unchanged.
    """
    f = canonicalize(field)
    G, ok, sums, (rows, cols) = smoother_response(f, pattern, eps, mask)
    out_vals, nonzero = _relax(sums.F0, G, s)
    keep = ok & nonzero
    out = f.copy()
    out[rows[keep], cols[keep]] = canonicalize(out_vals[keep])
    return out


def drifter(field, pattern: CirclePattern, mode: str = "tangent", eps: float = 1e-6,
            mask=None) -> np.ndarray:
    """Tangent- (``sum w_k F_k``) or normal-weighted (``sum v_k F_k``) drifter; degenerate pixels give 0.

    The sum runs over the stored single-angle values, so the result is a plain
    complex map and is not canonicalised.
    """
    if mode not in ("tangent", "normal"):
        raise InvalidParameter(f"unknown drifter mode {mode!r}")
    f = np.asarray(field, dtype=np.complex128)
    sums, (rows, cols) = _accumulate(f, pattern, mask, "drifter")
    den, acc = (sums.n, sums.tangent) if mode == "tangent" else (sums.q, sums.normal)
    ok = np.abs(den) >= eps
    out = np.zeros(f.shape, dtype=np.complex128)
    out[rows[ok], cols[ok]] = acc[ok] / den[ok]
    return out


def drifter_pair(field, pattern: CirclePattern, eps: float = 1e-6, mask=None):
    """Both drifters from a single pass over the circle."""
    f = np.asarray(field, dtype=np.complex128)
    sums, (rows, cols) = _accumulate(f, pattern, mask, "drifter")
    out = []
    for den, acc in ((sums.n, sums.tangent), (sums.q, sums.normal)):
        ok = np.abs(den) >= eps
        d = np.zeros(f.shape, dtype=np.complex128)
        d[rows[ok], cols[ok]] = acc[ok] / den[ok]
        out.append(d)
    return tuple(out)


def drifter_magnitude(field, pattern: CirclePattern, eps: float = 1e-6) -> np.ndarray:
    """``|D_T| + |D_N|``."""
    dt, dn = drifter_pair(field, pattern, eps)
    return np.abs(dt) + np.abs(dn)


def loop_delta_response(field, pattern: CirclePattern, eps: float = 1e-6, conjugate_field=None) -> np.ndarray:
    """Half the drifter magnitude of the field minus that of its conjugate.

    Positive on loops, negative on deltas.  ``conjugate_field`` overrides the
    plain conjugate (used when the conjugate went through its own smoothing).
    """
    f = np.asarray(field, dtype=np.complex128)
    fc = canonicalize(np.conj(f)) if conjugate_field is None else conjugate_field
    return (drifter_magnitude(f, pattern, eps) - drifter_magnitude(fc, pattern, eps)) / 2


# -- refinement pipeline ---------------------------------------------------------

@dataclass
class RefineTrace:
    O_1: np.ndarray
    O_2: np.ndarray
    O_3: np.ndarray
    M_1: np.ndarray
    M_2: np.ndarray
    M_3: np.ndarray
    M_4: np.ndarray
    S_1: np.ndarray
    I_3: np.ndarray
    iterations: int = 1
    capped: bool = False


def cap_magnitude(field, cap: float = 1.0) -> np.ndarray:
    """Clip magnitudes to ``cap``; the max rule alone lets them grow without bound across passes."""
    z = np.asarray(field, dtype=np.complex128)
    mag = np.abs(z)
    over = mag > cap
    out = z.copy()
    out[over] = z[over] * (cap / mag[over])
    return out


def filter_radius(scale: float, T_s: float) -> int:
    r = max(3, int(round(scale * T_s)))
    return r if r % 2 else r + 1


def smoothing_mask(M_2, M_3, radius: float) -> np.ndarray:
    """Pixels that differ between the two estimates but hold no singularity, dilated."""
    m = np.asarray(M_2, dtype=bool) & ~np.asarray(M_3, dtype=bool)
    return dilate(m, radius) if m.any() else m


def build_refinement_masks(image, field, M_F, T_s: float, params) -> RefineTrace:
    """Estimate the two auxiliary fields and derive the singularity and difference masks."""
    if not T_s > 0:
        raise InvalidParameter(f"ridge period must be positive, got {T_s}")
    M_F = np.asarray(M_F, dtype=bool)
    if not M_F.any():
        from .errors import EmptyForeground

        raise EmptyForeground("foreground mask is empty")
    if field is not None:
        zero = np.abs(np.asarray(field))[M_F] == 0
        if zero.mean() > 0.99:
            raise DegenerateField("orientation field vanishes on the foreground")
    eps = params.epsilon_w
    min_area = T_s * T_s
    drift_pat = pattern_for(params.rho_D1, T_s, params)
    adj_pat = pattern_for(params.rho_A, T_s, params)
    # estimated fields are never exactly uniform: sum(n) stays tiny but non-zero there, and an
    # absolute floor lets 1 / sum(n) explode instead of falling back
    drift_eps = max(eps, params.weight_floor * drift_pat.n)
    adj_eps = max(eps, params.weight_floor * adj_pat.n)

    O_1 = estimate_from_params(image, params, filter_radius(1.5, T_s))
    smooth_pat = pattern_for(params.rho_S, T_s, params)
    S_O1 = cap_magnitude(smoother(O_1, smooth_pat, params.s, eps))
    S_O1c = cap_magnitude(smoother(canonicalize(np.conj(O_1)), smooth_pat, params.s, eps))
    # drifters see phase only; magnitudes carry no singularity information here
    delta_score = loop_delta_response(unit(S_O1), drift_pat, drift_eps, conjugate_field=unit(S_O1c))
    M_1 = erode((delta_score > -params.tau1) & M_F, params.m1_erode)
    S_1 = np.clip(gaussian_blur(M_1.astype(np.float64), params.s1_sigma), 0.0, 1.0)

    O_2 = estimate_from_params(image, params, filter_radius(0.5, T_s))
    O_3 = cap_magnitude(adjuster(S_O1, adj_pat, S_1, adj_eps))
    A_O2 = cap_magnitude(adjuster(O_2, adj_pat, params.s if params.scalar_strength_o2 else S_1, adj_eps))
    M_2 = (doubled_distance(O_3, A_O2) > params.tau2) & M_F
    M_2 = dilate(filter_min_area(M_2, min_area), params.m2_dilate)

    I_3 = gaussian_blur(loop_delta_response(unit(O_3), drift_pat, drift_eps), params.i3_sigma)
    M_0 = erode(M_F, params.mf_erode)
    M_3 = filter_min_area((np.abs(I_3) > params.tau3) & M_0, min_area)
    M_4 = smoothing_mask(M_2, M_3, params.m4_dilate)
    return RefineTrace(O_1, O_2, O_3, M_1, M_2, M_3, M_4, S_1, I_3)


def _blend(new, old, weight):
    out = old.copy()
    sel = weight > 0
    mix = double_field(new[sel]) * weight[sel] + double_field(old[sel]) * (1 - weight[sel])
    out[sel] = halve_field(mix)
    return out


def iterative_smoothing(field, M_init, M_F, pattern: CirclePattern, params,
                        raise_on_cap: bool = True, history=None) -> tuple[np.ndarray, int]:
    """Repeatedly smooth inside a shrinking mask until the mask empties.

    Each pass keeps the pixels that still changed by more than ``tau4`` inside
    the eroded previous mask, so the mask shrinks strictly and the loop ends.
    Returns ``(field, iterations)``; at the cap either raises
    :class:`IterationCapExceeded` carrying the current field or, with
    ``raise_on_cap=False``, returns it.  ``history``, a list, receives the mask
    pixel count after every pass.
    """
    current = canonicalize(field)
    mask = np.asarray(M_init, dtype=bool) & np.asarray(M_F, dtype=bool)
    reach = int(math.ceil(3 * params.blend_sigma)) + int(math.ceil(params.smooth_dilate)) + 1
    iterations = 0
    while True:
        iterations += 1
        if mask.any():
            support = dilate(mask, reach)
            smoothed = cap_magnitude(smoother(current, pattern, params.s, params.epsilon_w, mask=support))
            changed = doubled_distance(smoothed, current) > params.tau4
            nxt = erode(mask, params.smooth_erode) & changed
            nxt = dilate(nxt, params.smooth_dilate) if nxt.any() else nxt
        else:
            nxt = mask
        if nxt.any():
            weight = gaussian_blur(nxt.astype(np.float64), params.blend_sigma, border="zero")
            current = _blend(smoothed, current, weight)
        mask = nxt
        if history is not None:
            history.append(int(mask.sum()))
        if not mask.any():
            return current, iterations
        if iterations >= params.iteration_cap:
            if raise_on_cap:
                raise IterationCapExceeded(f"mask not empty after {iterations} passes",
                                           field=current, iterations=iterations)
            return current, iterations


def refine(image, M_F, T_s: float, params, field=None) -> tuple[np.ndarray, RefineTrace]:
    """Full refinement: build the masks, then smooth iteratively inside ``M_4``."""
    trace = build_refinement_masks(image, field, M_F, T_s, params)
    pattern = pattern_for(params.rho_S, T_s, params)
    try:
        out, iterations = iterative_smoothing(trace.O_3, trace.M_4, M_F, pattern, params)
    except IterationCapExceeded as exc:
        trace.iterations = exc.iterations
        trace.capped = True
        exc.trace = trace
        raise
    trace.iterations = iterations
    return out, trace
