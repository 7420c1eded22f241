"""Pipeline configuration.

Every scalar knob of the pipeline lives in :class:`PipelineParams`.  The first
block holds the published experiment settings; the rest are engineering
defaults for quantities the method leaves open.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .errors import InvalidParameter
from .fileio import format_keyvalues, parse_keyvalues


@dataclass(frozen=True)
class PipelineParams:
    # filter bank and estimation
    r: int = 15
    sigma1: float = 1.0
    alpha1: float = 2.0
    sigma2: float = 0.85
    alpha2: float = 2.0
    N_A: int = 36
    N_S: int = 31
    t_tilde: float = 0.25
    # refinement radii (multiples of the ridge period) and thresholds
    rho_S: float = 1.0
    rho_D1: float = 1.0
    tau1: float = 0.3
    rho_A: float = 0.7
    tau2: float = 0.5
    tau3: float = 0.1

    s: float = 0.5
    tau4: float = 0.1
    epsilon_w: float = 1e-6
    N_C: int = 0  # 0 selects max(8, round(2*pi*R))
    iteration_cap: int = 100
    smooth_ratio: float = 1 / 3  # Gaussian sigmas of the estimator, as a fraction of r
    strict_eq5: bool = False
    scalar_strength_o2: bool = False

    # preprocessing
    tau_V: float = 50.0
    tau0: float = 100.0
    tau_edge: float = 0.15
    hist_sigma: float = 3.0
    clip: float = 8.0
    median_radius: float = 2.0
    blur_sigma: float = 1.5
    min_radius: float = 2.0
    seg_dilate: float = 3.0
    seg_erode: float = 5.0
    seg_final_dilate: float = 5.0
    seg_keep: int = 1
    edge_sigma: float = 1.0
    edge_low: float = 0.1
    edge_high: float = 0.2
    edge_density_sigma: float = 8.0
    amp_radius: float = 4.0
    t_m1: float = 0.0
    t_m2: float = 128.0
    t_M1: float = 128.0
    t_M2: float = 255.0

    # period estimation
    segment_length: float = 48.0
    grid_step: int = 16
    peak_ratio: float = 0.5

    # refinement masks
    m1_erode: float = 3.0
    s1_sigma: float = 3.0
    m2_dilate: float = 3.0
    i3_sigma: float = 2.0
    mf_erode: float = 3.0
    m4_dilate: float = 3.0
    smooth_erode: float = 2.0
    smooth_dilate: float = 1.0
    blend_sigma: float = 1.0
    weight_floor: float = 0.2  # adjuster and drifter degeneracy threshold as a fraction of N_C

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                continue
            if not math.isfinite(value):
                raise InvalidParameter(f"{f.name} must be finite")
        if self.r < 3 or self.r % 2 == 0:
            raise InvalidParameter(f"r must be an odd integer >= 3, got {self.r}")
        for name in ("s", "t_tilde", "tau1", "tau2", "tau3", "tau4"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise InvalidParameter(f"{name} must lie in (0, 1], got {v}")
        if self.s >= 1:
            raise InvalidParameter("relaxation s must lie in (0, 1)")
        for name in ("sigma1", "alpha1", "sigma2", "alpha2", "rho_S", "rho_D1", "rho_A",
                     "epsilon_w", "smooth_ratio", "segment_length", "peak_ratio", "hist_sigma",
                     "blur_sigma", "edge_sigma", "edge_density_sigma", "s1_sigma",
                     "i3_sigma", "blend_sigma", "weight_floor"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive")
        if self.N_A < 4:
            raise InvalidParameter("N_A must be >= 4")
        if self.N_S < 8:
            raise InvalidParameter("N_S must be >= 8")
        if self.N_C and self.N_C < 8:
            raise InvalidParameter("N_C must be 0 (auto) or >= 8")
        if self.grid_step < 1 or self.iteration_cap < 1:
            raise InvalidParameter("grid_step and iteration_cap must be >= 1")
        if not self.smooth_erode > self.smooth_dilate:
            raise InvalidParameter("smooth_erode must exceed smooth_dilate for termination")
        if not (self.t_m1 < self.t_m2 and self.t_M1 < self.t_M2):
            raise InvalidParameter("amplification thresholds must be increasing")

    def replace(self, **changes) -> "PipelineParams":
        return dataclasses.replace(self, **changes)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def dumps(self) -> str:
        return format_keyvalues((k, _fmt(v)) for k, v in self.items())

    @classmethod
    def loads(cls, text: str, **overrides) -> "PipelineParams":
        raw = parse_keyvalues(text)
        return cls.from_strings(raw, **overrides)

    @classmethod
    def from_strings(cls, raw: dict[str, str], **overrides) -> "PipelineParams":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, text in raw.items():
            if key not in types:
                raise InvalidParameter(f"unknown parameter {key!r}")
            values[key] = _parse(types[key], key, text)
        values.update(overrides)
        return cls(**values)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(type_name, key: str, text: str):
    type_name = getattr(type_name, "__name__", type_name)
    try:
        if type_name == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if type_name == "int":
            return int(text)
        return float(text)
    except ValueError as exc:
        raise InvalidParameter(f"cannot parse {key} = {text!r}") from exc
