from __future__ import annotations

import numpy as np
import pytest

from fporient.errors import InvalidParameter, NoReliableSegments, OutOfBounds
from fporient.period import estimate_period, grid_points, profile_frequency, sample_profile, segment_points


def horizontal_ridges(h, w, period):
    rows = np.arange(h, dtype=float)
    return np.tile((127.5 + 127.5 * np.cos(2 * np.pi * rows / period))[:, None], (1, w))


def first_peak_oracle(values):
    """Moving average of width 3 (edge repeat), mean removal, DFT, first strict local maximum."""
    v = np.asarray(values, float)
    p = np.concatenate([[v[0]], v, [v[-1]]])
    s = (p[:-2] + p[1:-1] + p[2:]) / 3
    s -= s.mean()
    mag = np.array([abs(sum(s[n] * np.exp(-2j * np.pi * f * n / len(s)) for n in range(len(s))))
                    for f in range(len(s) // 2 + 1)])
    for f in range(1, len(mag)):
        right = mag[f + 1] if f + 1 < len(mag) else -1
        if mag[f] > mag[f - 1] and mag[f] >= right and mag[f] >= 0.5 * mag[1:].max():
            return f


def test_horizontal_orientation_samples_vertically():
    field = np.ones((64, 64), complex)
    xs, ys = segment_points(field, (32, 32), 48, 31)
    np.testing.assert_allclose(xs, 32.0, atol=1e-12)
    assert np.ptp(ys) == pytest.approx(48)


def test_constant_image_flat_profile():
    _, v = sample_profile(np.ones((64, 64), complex), np.full((64, 64), 90.0), (32, 32), 48, 31)
    np.testing.assert_allclose(v, 90.0)


def test_profile_matches_interpolated_sinusoid():
    img = horizontal_ridges(80, 80, 8.0)
    field = np.ones((80, 80), complex)
    _, v = sample_profile(field, img, (40, 40), 48, 31)
    ys = 40 + np.linspace(-24, 24, 31)
    expected = np.interp(ys, np.arange(80), img[:, 0])
    assert np.abs(v - expected).max() < 1e-3


def test_out_of_bounds_and_sample_count():
    field = np.ones((40, 40), complex)
    with pytest.raises(OutOfBounds):
        sample_profile(field, np.zeros((40, 40)), (5, 20), 48, 31)
    with pytest.raises(InvalidParameter):
        sample_profile(field, np.zeros((40, 40)), (20, 20), 10, 7)


def test_low_magnitude_everywhere(params):
    img = horizontal_ridges(128, 128, 8.0)
    with pytest.raises(NoReliableSegments):
        estimate_period(np.full((128, 128), 0.2 + 0j), img, params)


def test_uniform_period_8(params):
    img = horizontal_ridges(160, 160, 8.0)
    est = estimate_period(np.ones((160, 160), complex), img, params)
    assert 7.2 <= est.T_s <= 8.8
    assert len({f for _, f in est.per_segment}) == 1
    assert est.f_s == pytest.approx(np.mean([f for _, f in est.per_segment]))


def test_two_halves_oracle(params):
    h, w = 160, 192
    img = np.hstack([horizontal_ridges(h, w // 2, 6.0), horizontal_ridges(h, w // 2, 12.0)])
    field = np.ones((h, w), complex)
    est = estimate_period(field, img, params)
    left = [f for (i, j), f in est.per_segment if j < w // 2]
    right = [f for (i, j), f in est.per_segment if j >= w // 2]
    assert len(left) == len(right) > 0
    # independent per-segment arithmetic
    oracle = []
    for i, j in grid_points((h, w), params.grid_step):
        if i < 24 or i > h - 1 - 24:
            continue
        ys = i + np.linspace(-24, 24, params.N_S)
        col = img[:, j]
        oracle.append(first_peak_oracle(np.interp(ys, np.arange(h), col)))
    f_a, f_b = np.mean(left), np.mean(right)
    assert est.f_s == pytest.approx((f_a + f_b) / 2, abs=1e-9)
    assert est.f_s == pytest.approx(np.mean(oracle), abs=1e-9)
    assert est.T_s == pytest.approx(params.segment_length / np.mean(oracle), abs=1e-9)


def test_affine_invariance(params, rng):
    img = horizontal_ridges(128, 128, 9.0) + rng.normal(0, 5, (128, 128))
    field = np.ones((128, 128), complex)
    a = estimate_period(field, img, params).T_s
    b = estimate_period(field, 0.4 * img + 30, params).T_s
    assert abs(a - b) < 1e-9


def test_unreliable_segments_ignored(params):
    img = horizontal_ridges(160, 160, 8.0)
    img[:, 80:] = horizontal_ridges(160, 80, 11.0)
    full = np.ones((160, 160), complex)
    weak = full.copy()
    weak[:, 80:] = 0.1
    a = estimate_period(full, img, params)
    b = estimate_period(weak, img, params)
    kept = dict(b.per_segment)
    assert all(j < 80 for _, j in kept)
    assert all(dict(a.per_segment)[c] == f for c, f in kept.items())


def test_profile_frequency_flat_and_peak():
    assert profile_frequency(np.ones(31)) is None
    n = np.arange(31)
    assert profile_frequency(np.cos(2 * np.pi * 5 * n / 31)) == 5
