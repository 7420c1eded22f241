from __future__ import annotations

import numpy as np
import pytest

from fporient.params import PipelineParams
from fporient.synth import Singularity, ellipse_mask, render_ridges, synth_field


@pytest.fixture(scope="session")
def params():
    return PipelineParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def loop_scene():
    """256^2 rendered loop, its generator field and an elliptic footprint."""
    w = h = 256
    field = synth_field(w, h, [Singularity(128, 110, "loop")], 0.0)
    footprint = ellipse_mask(w, h, (128, 128), (100, 105))
    image = render_ridges(field, 8.0, seed=4)
    return image, field, footprint


@pytest.fixture(scope="session")
def loop_delta_scene():
    w = h = 256
    sings = [Singularity(128, 96, "loop"), Singularity(128, 176, "delta")]
    field = synth_field(w, h, sings, 0.0)
    footprint = ellipse_mask(w, h, (128, 128), (100, 105))
    image = render_ridges(field, 8.0, seed=4)
    return image, field, footprint, sings


def random_field(rng, shape, zero_fraction=0.0):
    theta = rng.uniform(0.0, np.pi, size=shape)
    mag = rng.uniform(0.2, 1.5, size=shape)
    if zero_fraction:
        mag[rng.random(shape) < zero_fraction] = 0.0
    z = mag * np.exp(1j * theta)
    flip = (z.imag < 0) | ((z.imag == 0) & (z.real < 0))
    z[flip] = -z[flip]
    return z


def poincare_index(field, center, radius):
    """Sum of wrapped orientation changes around a square circuit, in turns."""
    cy, cx = center
    r = radius
    path = ([(cy - r, cx + k) for k in range(-r, r)] + [(cy + k, cx + r) for k in range(-r, r)]
            + [(cy + r, cx - k) for k in range(-r, r)] + [(cy - k, cx - r) for k in range(-r, r)])
    theta = [np.angle(field[p]) for p in path]
    total = 0.0
    for a, b in zip(theta, theta[1:] + theta[:1]):
        d = b - a
        d = (d + np.pi / 2) % np.pi - np.pi / 2
        total += d
    return total / (2 * np.pi)
