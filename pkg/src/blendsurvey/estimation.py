"""Weighted point estimates, WLS regression, the blending-adequacy test and post hoc blending."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats

from .blending import WeightSet
from .errors import DegenerateVariance, WrongScheme
from .variance import linearized_cov_wls, linearized_se_mean, wls_fit


class VarianceMethod(str, Enum):
    LINEARIZATION = "LINEARIZATION"
    JACKKNIFE = "JACKKNIFE"


@dataclass(frozen=True)
class EstimateReport:
    estimand: str
    estimate: float
    se: float
    deff: float
    ci: tuple
    variance_method: VarianceMethod
    n_used: int
    n_excluded: int = 0

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["variance_method"] = self.variance_method.value
        rec["ci_low"], rec["ci_high"] = rec.pop("ci")
        return rec


def z_quantile(alpha: float) -> float:
    return float(stats.norm.ppf(1 - alpha / 2))


def two_sided_p(z: float) -> float:
    return float(2 * stats.norm.sf(abs(z)))


def weighted_mean(y, w) -> float:
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    return float(np.sum(w * y) / np.sum(w))


def weighted_total(y, w) -> float:
    """Horvitz-Thompson style total sum(w y); weights must be inverse inclusion probabilities."""
    return float(np.sum(np.asarray(w, float) * np.asarray(y, float)))


def srs_variance_of_mean(y, w, n: int | None = None) -> float:
    """Variance of the mean under simple random sampling of ``n`` units.

    The element variance is estimated from the positively weighted units.
    ``n`` defaults to their count; pass the full sample size when some
    sampled units legitimately received zero weight (e.g. calibration at
    the zero bound), as the Kish design effect does.
    """
    live = np.asarray(w) > 0
    y, w = np.asarray(y, float)[live], np.asarray(w, float)[live]
    m = len(y)
    mu = weighted_mean(y, w)
    s2 = np.sum(w * (y - mu) ** 2) / np.sum(w) * m / (m - 1)
    return float(s2 / (m if n is None else n))


def _drop_missing(y, w):
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    ok = ~np.isnan(y)
    return y[ok], w[ok], int((~ok).sum())


def make_report(
    name: str,
    estimate: float,
    se: float,
    srs_var: float,
    method: VarianceMethod,
    n_used: int,
    n_excluded: int = 0,
    alpha: float = 0.05,
) -> EstimateReport:
    half = z_quantile(alpha) * se
    deff = se**2 / srs_var if srs_var > 0 else float("nan")
    return EstimateReport(
        name, float(estimate), float(se), float(deff), (estimate - half, estimate + half),
        VarianceMethod(method), n_used, n_excluded,
    )


def estimate_mean(
    y,
    w,
    name: str = "mean",
    alpha: float = 0.05,
    se: float | None = None,
    method: VarianceMethod = VarianceMethod.LINEARIZATION,
) -> EstimateReport:
    """Weighted mean with a linearized standard error unless ``se`` is supplied."""
    y, w, dropped = _drop_missing(y, w)
    est = weighted_mean(y, w)
    if se is None:
        se = linearized_se_mean(y, w)
        method = VarianceMethod.LINEARIZATION
    return make_report(
        name, est, se, srs_variance_of_mean(y, w), method, int(np.count_nonzero(w)), dropped, alpha
    )


@dataclass(frozen=True)
class RegressionResult:
    names: list
    coef: np.ndarray
    cov: np.ndarray
    n_used: int

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.se > 0, self.coef / self.se, 0.0)

    @property
    def p(self) -> np.ndarray:
        return np.array([two_sided_p(z) for z in self.z])

    def report(self, alpha: float = 0.05) -> list[EstimateReport]:
        out = []
        for k, name in enumerate(self.names):
            out.append(
                make_report(
                    name, self.coef[k], self.se[k], float("nan"),
                    VarianceMethod.LINEARIZATION, self.n_used, alpha=alpha,
                )
            )
        return out


def wls_regression(y, X, w, names: Sequence[str] | None = None) -> RegressionResult:
    """Weighted least squares with the linearized (sandwich) covariance."""
    y = np.asarray(y, float)
    X = np.asarray(X, float)
    w = np.asarray(w, float)
    ok = ~np.isnan(y)
    y, X, w = y[ok], X[ok], w[ok]
    names = list(names) if names is not None else [f"b{j}" for j in range(X.shape[1])]
    cov = linearized_cov_wls(y, X, w)
    coef = wls_fit(y, X, w)
    return RegressionResult(names, coef, cov, int(np.count_nonzero(w)))


@dataclass(frozen=True)
class AdequacyResult:
    delta_hat: float
    se_delta: float
    z_star: float
    p_value: float


def delta_test(y, w, conv, se_delta: float | None = None) -> AdequacyResult:
    """WLS fit of y = mu + delta 1{S2} + e with any weights; no scheme check."""
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    conv = np.asarray(conv, bool)
    ok = ~np.isnan(y)
    X = np.column_stack([np.ones(ok.sum()), conv[ok].astype(float)])
    fit = wls_regression(y[ok], X, w[ok], ["mu", "delta"])
    delta = float(fit.coef[1])
    se = float(fit.se[1]) if se_delta is None else float(se_delta)
    if se > 0:
        z = delta / se
    else:
        z = 0.0 if abs(delta) < 1e-12 else float(np.copysign(np.inf, delta))
    return AdequacyResult(delta, se, float(z), two_sided_p(z))


def adequacy_test(y, w_star: WeightSet, membership=None, se_delta: float | None = None) -> AdequacyResult:
    """Test delta = 0 in y = mu + delta 1{S2} + e fitted by WLS under disjoint weights.

    ``se_delta`` may be supplied (e.g. from a jackknife); otherwise the
    sandwich standard error is used.
    """
    if not w_star.scheme.disjoint:
        raise WrongScheme(
            f"{w_star.scheme.value} weights are simultaneous; the adequacy test needs "
            "disjoint weights (DPS or DC), under which each sample is representative by itself"
        )
    conv = w_star.is_conv if membership is None else membership
    return delta_test(y, w_star.weights, conv, se_delta)


def posthoc_blend(
    theta1: EstimateReport, theta2: EstimateReport, cov12: float, alpha: float = 0.05
) -> tuple[float, EstimateReport]:
    """Variance-minimising combination kappa*theta1 + (1 - kappa)*theta2."""
    v1, v2, c = theta1.se**2, theta2.se**2, float(cov12)
    denom = v1 + v2 - 2 * c
    if denom <= 0:
        raise DegenerateVariance(f"Var1 + Var2 - 2Cov = {denom:.3e} is not positive")
    kappa = (v2 - c) / denom
    if not 0 <= kappa <= 1:
        warnings.warn(f"post hoc kappa {kappa:.4f} lies outside [0, 1]", RuntimeWarning, stacklevel=2)
    est = kappa * theta1.estimate + (1 - kappa) * theta2.estimate
    var = kappa**2 * v1 + (1 - kappa) ** 2 * v2 + 2 * kappa * (1 - kappa) * c
    report = make_report(
        f"posthoc({theta1.estimand},{theta2.estimand})",
        est,
        float(np.sqrt(max(var, 0.0))),
        float("nan"),
        theta1.variance_method,
        theta1.n_used + theta2.n_used,
        alpha=alpha,
    )
    return float(kappa), report
