"""Fingerprint orientation field extraction and refinement."""
from __future__ import annotations

from .errors import FingerprintError
from .orientation import estimate_orientation, estimate_from_params
from .params import PipelineParams
from .period import estimate_period
from .preprocess import preprocess
from .refine import refine
from .synth import Singularity, angular_error, render_ridges, synth_field

__version__ = "0.1.0"
