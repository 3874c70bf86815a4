"""End-to-end weighting: response model, propensity model, scheme weights, trimming.

This is the unit of work the jackknife repeats for every replicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .blending import AUTO, Scheme, WeightSet, design_only_weights, dps_weights, sps_weights, trim_weights
from .calibration import BenchmarkVector, dc_weights, estimate_benchmarks, sc_weights, two_stage_benchmarks
from .dataset import INTERCEPT, Dataset
from .propensity import InclusionProbs, PropensityFit, assemble_inclusion, estimate_gamma, estimate_response


@dataclass(frozen=True)
class BlendConfig:
    """Variable lists and weighting options.

    ``aux_vars`` feed the convenience-membership model, ``response_vars`` the
    response model (None: no response model), ``calib_vars`` the calibration
    constraints (None: same as ``aux_vars``).
    """

    aux_vars: Sequence[str]
    response_vars: Sequence[str] | None = None
    calib_vars: Sequence[str] | None = None
    scheme: Scheme = Scheme.SPS
    kappa: object = AUTO
    trim_pct: float = 0.01
    init: str = "ps"
    benchmark_source: str = "ht"
    known_benchmarks: BenchmarkVector | None = None
    bounds: tuple = (0.0, np.inf)
    gamma_clip: tuple | None = (1e-6, 1 - 1e-3)

    @property
    def calibration_names(self) -> list[str]:
        vars_ = list(self.aux_vars if self.calib_vars is None else self.calib_vars)
        return [INTERCEPT] + vars_


@dataclass
class InclusionFit:
    blended: Dataset
    probs: InclusionProbs
    response: PropensityFit
    gamma: PropensityFit
    _target: BenchmarkVector | None = field(default=None, repr=False)


def fit_inclusion(ds: Dataset, cfg: BlendConfig, starts: dict | None = None) -> InclusionFit:
    """Fit r on the probability frame and gamma on S; assemble d, q, p over S."""
    starts = starts or {}
    resp = estimate_response(ds, cfg.response_vars, start=starts.get("response"))
    s_mask = ds.respondent
    s = ds.blended()
    gam = estimate_gamma(s, cfg.aux_vars, clip=cfg.gamma_clip, start=starts.get("gamma"))
    probs = assemble_inclusion(s, resp.values[s_mask], gam.values)
    return InclusionFit(s, probs, resp, gam)


def benchmarks(fit: InclusionFit, cfg: BlendConfig) -> BenchmarkVector:
    if fit._target is not None:
        return fit._target
    names = cfg.calibration_names
    if cfg.benchmark_source == "file":
        if cfg.known_benchmarks is None:
            raise ValueError("benchmark_source='file' needs known_benchmarks")
        target = cfg.known_benchmarks.select(names)
    elif cfg.benchmark_source == "two-stage":
        target = two_stage_benchmarks(fit.blended, cfg.known_benchmarks, fit.probs, names, cfg.bounds)
    else:
        target = estimate_benchmarks(fit.blended, fit.probs, names)
    fit._target = target
    return target


def scheme_weights(fit: InclusionFit, scheme: Scheme, cfg: BlendConfig) -> WeightSet:
    """Untrimmed weights of one scheme over the blended sample."""
    scheme = Scheme(scheme)
    if scheme is Scheme.SPS:
        return sps_weights(fit.probs)
    if scheme is Scheme.DPS:
        return dps_weights(fit.probs, cfg.kappa)
    if scheme is Scheme.DESIGN_ONLY:
        return design_only_weights(fit.probs)
    target = benchmarks(fit, cfg)
    if scheme is Scheme.SC:
        return sc_weights(fit.blended, fit.probs, target, cfg.init, cfg.bounds)
    return dc_weights(fit.blended, fit.probs, target, cfg.kappa, cfg.init, cfg.bounds)


def compute_weights(ds: Dataset, cfg: BlendConfig, scheme: Scheme | None = None) -> tuple[InclusionFit, WeightSet]:
    fit = fit_inclusion(ds, cfg)
    ws = scheme_weights(fit, cfg.scheme if scheme is None else scheme, cfg)
    if cfg.trim_pct > 0:
        ws = trim_weights(ws, cfg.trim_pct)
    return fit, ws
