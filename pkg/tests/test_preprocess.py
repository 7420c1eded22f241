from __future__ import annotations

import numpy as np
import pytest
from scipy import ndimage

from fporient.errors import DimensionMismatch, EmptyForeground
from fporient.imgproc import disk
from fporient.preprocess import (amplify_ridges, default_oblique_kernel, equalize, histogram_valley,
                                 oblique_kernel, remove_border, segment)
from fporient.synth import ellipse_mask, render_ridges, synth_field


def valley_oracle(values, sigma=3.0):
    """Smoothed 256-bin histogram; deepest bin between the two tallest local maxima."""
    hist = np.bincount(np.asarray(values).ravel(), minlength=256).astype(float)
    x = np.arange(-int(4 * sigma + 0.5), int(4 * sigma + 0.5) + 1)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    smooth = np.convolve(hist, g, mode="same")
    peaks = [i for i in range(256)
             if smooth[i] > (smooth[i - 1] if i else -1) and smooth[i] >= (smooth[i + 1] if i < 255 else -1)]
    a, b = sorted(sorted(peaks, key=lambda i: -smooth[i])[:2])
    seg = smooth[a:b + 1]
    return a + np.flatnonzero(np.isclose(seg, seg.min(), rtol=0, atol=1e-12)).mean()


class TestEqualize:
    def test_constant(self):
        img = np.full((16, 16), 77, np.uint8)
        res = equalize(img)
        np.testing.assert_array_equal(res.image, img)
        assert res.threshold == 128

    def test_two_levels(self):
        img = np.where(np.arange(64 * 64).reshape(64, 64) % 2 == 0, 60, 200).astype(np.uint8)
        res = equalize(img)
        assert set(np.unique(res.image)) == {0, 255}
        original = 60 + res.threshold * 140 / 255
        assert 60 < original < 200
        assert res.threshold == pytest.approx(valley_oracle(np.where(img == 60, 0, 255)), abs=1e-9)

    def test_threshold_maps_to_128(self, rng):
        img = np.concatenate([rng.normal(70, 12, 3000), rng.normal(190, 12, 3000)])
        img = np.clip(img, 0, 255).reshape(60, 100).astype(np.uint8)
        res = equalize(img)
        scaled = (img.astype(float) - img.min()) * 255 / (img.max() - img.min())
        below = scaled <= res.threshold
        assert (res.image[below] <= 128).all() and (res.image[~below] >= 128).all()

    def test_full_range_bimodal(self, rng):
        img = np.concatenate([rng.integers(0, 90, 2000), rng.integers(160, 256, 2000)])
        img[0], img[1] = 0, 255
        res = equalize(img.reshape(40, 100).astype(np.uint8))
        assert res.image.min() == 0 and res.image.max() == 255

    def test_idempotent_two_levels(self):
        img = np.where(np.indices((32, 32)).sum(axis=0) % 3 == 0, 60, 200).astype(np.uint8)
        once = equalize(img).image
        twice = equalize(once).image
        assert np.abs(once.astype(int) - twice.astype(int)).max() <= 1

    def test_valley_plateau(self):
        hist = np.zeros(256)
        hist[40], hist[200] = 1000, 800
        assert histogram_valley(hist, 3.0) == pytest.approx(120, abs=1.0)
        assert histogram_valley(np.ones(256), 3.0) is None


class TestRemoveBorder:
    def test_oblique_kernel_shape(self):
        k = default_oblique_kernel(100)
        assert k.shape == (5, 27)
        np.testing.assert_array_equal(k[:, 0], [1, 1, 0, -1, -1])
        assert oblique_kernel(8).shape == (5, 9)

    def test_noise_full_true(self, rng):
        img = rng.integers(0, 256, (128, 128)).astype(np.uint8)
        assert remove_border(img).all()

    def test_constant_top_rows(self, rng):
        img = rng.integers(0, 256, (96, 96)).astype(np.uint8)
        img[:10] = 140
        m = remove_border(img)
        assert not m[:10].any()
        assert m[10:].all()

    def test_dark_stripe(self, rng):
        img = rng.integers(60, 256, (128, 128)).astype(np.uint8)
        img[19:22] = 0
        m, horizontal, vertical = remove_border(img, return_lines=True)
        truth = np.arange(128)[:, None] >= 20
        assert horizontal.top is not None and horizontal.bottom is None
        assert vertical == (None, None) or vertical.top is None and vertical.bottom is None
        assert (m == np.broadcast_to(truth, m.shape)).mean() >= 0.99

    def test_vertical_stripe(self, rng):
        img = rng.integers(60, 256, (128, 128)).astype(np.uint8)
        img[:, 105:108] = 0
        m, _, vertical = remove_border(img, return_lines=True)
        truth = np.arange(128)[None, :] <= 106
        assert vertical.bottom is not None
        assert (m == np.broadcast_to(truth, m.shape)).mean() >= 0.99

    def test_busy_lines_survive_scan(self, rng):
        img = rng.integers(0, 256, (64, 64)).astype(np.uint8)
        # mid-grey keeps the band from reading as a line edge
        img[:5] = 128
        img[2, 10] = 255
        m = remove_border(img)
        assert not m[:2].any()
        assert m[2:].all()


@pytest.fixture(scope="module")
def card():
    w = h = 320
    field = synth_field(w, h, [], np.radians(60))
    footprint = ellipse_mask(w, h, (160, 160), (70, 90))
    image = render_ridges(field, 8.0, seed=3, footprint=footprint)
    return image, footprint


class TestSegment:
    def test_white_image(self, params):
        img = np.full((96, 96), 255, np.uint8)
        with pytest.raises(EmptyForeground):
            segment(img, np.ones((96, 96), bool), params)

    def test_coverage(self, params, card):
        image, footprint = card
        eq = equalize(image).image
        m = segment(eq, remove_border(eq), params)
        assert (m & footprint).sum() >= 0.95 * footprint.sum()
        assert (m & ~footprint).sum() <= 0.05 * (~footprint).sum()

    def test_convex(self, params, card, rng):
        image, _ = card
        eq = equalize(image).image
        m = segment(eq, remove_border(eq), params)
        pts = np.argwhere(m)
        for _ in range(300):
            a, b = pts[rng.integers(len(pts), size=2)]
            n = int(np.abs(b - a).max()) + 1
            t = np.linspace(0, 1, n)
            rows = np.rint(a[0] + t * (b[0] - a[0])).astype(int)
            cols = np.rint(a[1] + t * (b[1] - a[1])).astype(int)
            assert m[rows, cols].all()

    def test_shape_mismatch(self, params):
        with pytest.raises(DimensionMismatch):
            segment(np.zeros((10, 10), np.uint8), np.ones((9, 10), bool), params)


def ramp(v, t1, t2):
    return np.clip((v - t1) * 255 / (t2 - t1), 0, 255)


class TestAmplify:
    def test_extremes_and_outside(self, params, rng):
        img = rng.integers(0, 256, (40, 40)).astype(float)
        mask = np.zeros((40, 40), bool)
        mask[5:35, 5:35] = True
        out = amplify_ridges(img, mask, params)
        I_R = np.where(mask, img, 255)
        fp = disk(params.amp_radius)
        I_M = ndimage.maximum_filter(I_R, footprint=fp, mode="nearest")
        I_m = ndimage.minimum_filter(I_R, footprint=fp, mode="nearest")
        lo = ramp(I_m, params.t_m1, params.t_m2)
        hi = ramp(I_M, params.t_M1, params.t_M2)
        at_min = mask & (I_R == I_m) & (I_M > I_m)
        at_max = mask & (I_R == I_M) & (I_M > I_m)
        assert at_min.any() and at_max.any()
        assert np.abs(out[at_min] - np.rint(lo[at_min])).max() <= 0.5
        assert np.abs(out[at_max] - np.rint(hi[at_max])).max() <= 0.5
        assert (out[~mask] == 255).all()

    def test_flat_region(self, params):
        img = np.full((30, 30), 90.0)
        out = amplify_ridges(img, np.ones((30, 30), bool), params)
        assert (out == np.rint(ramp(90.0, params.t_m1, params.t_m2))).all()

    def test_ordering(self, params, rng):
        img = rng.integers(0, 256, (50, 50)).astype(float)
        out = amplify_ridges(img, np.ones((50, 50), bool), params).astype(int)
        fp = disk(params.amp_radius)
        I_M = ndimage.maximum_filter(img, footprint=fp, mode="nearest")
        I_m = ndimage.minimum_filter(img, footprint=fp, mode="nearest")
        key = I_M * 1000 + I_m
        for k in np.unique(key)[:50]:
            sel = key == k
            order = np.argsort(img[sel], kind="stable")
            assert (np.diff(out[sel][order]) >= 0).all()
