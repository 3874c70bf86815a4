"""Logistic models for response (r) and convenience-membership (gamma) probabilities.

``assemble_inclusion`` turns them into d = d* r, q = d gamma / (1 - gamma)
and p = d + q for every unit of the blended sample.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .dataset import Dataset, column_names, design_matrix
from .errors import AllSameClass, GammaAtOne, SeparationWarning
from .numerics import check_rank

GAMMA_MIN = 1e-6
GAMMA_MAX = 1 - 1e-3
SEPARATION_ETA = 15.0


@dataclass(frozen=True)
class LogisticModel:
    coefficients: dict
    fitted_on: list
    converged: bool
    iterations: int
    max_abs_score: float
    separated: bool = False

    @property
    def params(self) -> np.ndarray:
        return np.fromiter(self.coefficients.values(), float)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return expit(X @ self.params)


def _loglik(eta, y, w):
    # log(1 + exp(eta)) computed stably
    return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    base_weights: np.ndarray | None = None,
    names: Sequence[str] | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    start: np.ndarray | None = None,
    check: bool = True,
) -> LogisticModel:
    """Maximum-likelihood logistic regression by IRLS with step halving.

    Convergence is declared when the max-abs (weighted) score drops to ``tol``.
    Hitting ``max_iter`` returns ``converged=False`` instead of raising.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, k = X.shape
    w = np.ones(n) if base_weights is None else np.asarray(base_weights, float)
    names = list(names) if names is not None else [f"b{j}" for j in range(k)]
    support = w > 0
    if check:
        ys = y[support]
        if ys.size == 0 or np.all(ys == ys[0]):
            raise AllSameClass("response is constant; logistic MLE does not exist")
        check_rank(X[support] * np.sqrt(w[support])[:, None])

    beta = np.zeros(k) if start is None else np.array(start, float)
    eta = X @ beta
    ll = _loglik(eta, y, w)
    score = X.T @ (w * (y - expit(eta)))
    it = 0
    converged = False
    separated = False
    while it < max_iter:
        smax = np.max(np.abs(score))
        if smax <= tol:
            converged = True
            break
        mu = expit(eta)
        h = w * mu * (1 - mu)
        info = (X * h[:, None]).T @ X
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, score, rcond=None)[0]
        it += 1
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, y, w)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            # no ascent possible at machine precision
            converged = smax <= 1e-8
            break
        beta, eta, ll = cand, eta_c, ll_c
        score = X.T @ (w * (y - expit(eta)))
        if np.max(np.abs(eta)) > 2 * SEPARATION_ETA and np.max(np.abs(score)) > tol:
            # coefficients drifting to infinity: quasi-complete separation
            separated = True
            break
    else:
        converged = np.max(np.abs(score)) <= tol
    if np.max(np.abs(eta), initial=0.0) > SEPARATION_ETA:
        separated = True
    return LogisticModel(
        coefficients=dict(zip(names, beta.tolist())),
        fitted_on=names,
        converged=bool(converged),
        iterations=it,
        max_abs_score=float(np.max(np.abs(score), initial=0.0)),
        separated=separated,
    )


@dataclass(frozen=True)
class PropensityFit:
    """Per-unit predicted probabilities plus the model that produced them."""

    values: np.ndarray
    model: LogisticModel | None


def estimate_gamma(
    ds: Dataset,
    vars: Sequence[str],
    clip: tuple[float, float] | None = (GAMMA_MIN, GAMMA_MAX),
    start: np.ndarray | None = None,
) -> PropensityFit:
    """P(unit in S2 | unit in S, x) for every unit of the blended sample ``ds``.

    ``ds`` must already be the blended sample (no nonrespondents).
    """
    ds.require_both()
    X, _ = design_matrix(ds, vars)
    model = fit_logistic(X, ds.is_conv.astype(float), names=column_names(vars), start=start)
    g = model.predict(X)
    if model.separated:
        warnings.warn(
            "convenience-membership model shows quasi-complete separation; "
            "propensities clipped",
            SeparationWarning,
            stacklevel=2,
        )
    if clip is not None:
        g = np.clip(g, *clip)
    return PropensityFit(g, model)


def estimate_response(
    ds: Dataset,
    vars: Sequence[str] | None,
    respondent_flag: np.ndarray | None = None,
    start: np.ndarray | None = None,
) -> PropensityFit:
    """Response probabilities r for every row of ``ds``.

    The model is fitted on the probability frame (S1 respondents plus
    nonrespondents) and predicted for all rows. User-supplied ``r_hat``
    values take precedence; with no model (or no nonrespondents) r = 1.
    """
    n = len(ds)
    supplied = ~np.isnan(ds.r_hat)
    flag = ds.respondent if respondent_flag is None else np.asarray(respondent_flag, bool)
    frame = ~ds.is_conv
    r = np.ones(n)
    model = None
    if vars is not None and np.any(frame & ~flag):
        X, _ = design_matrix(ds, vars)
        model = fit_logistic(
            X[frame], flag[frame].astype(float), names=column_names(vars), start=start
        )
        r = model.predict(X)
    r = np.where(supplied, ds.r_hat, r)
    return PropensityFit(r, model)


@dataclass(frozen=True)
class InclusionProbs:
    """Inclusion probabilities for the units of the blended sample, in order."""

    d_hat: np.ndarray
    gamma_hat: np.ndarray
    q_hat: np.ndarray
    p_hat: np.ndarray
    r_hat: np.ndarray
    is_conv: np.ndarray

    @classmethod
    def from_arrays(cls, d_hat, gamma_hat, is_conv, r_hat=None) -> "InclusionProbs":
        d = np.asarray(d_hat, float)
        g = np.asarray(gamma_hat, float)
        if np.any(g >= 1):
            raise GammaAtOne("gamma_hat >= 1 gives an unbounded convenience probability")
        q = d * g / (1 - g)
        return cls(
            d_hat=d,
            gamma_hat=g,
            q_hat=q,
            p_hat=d + q,
            r_hat=np.ones_like(d) if r_hat is None else np.asarray(r_hat, float),
            is_conv=np.asarray(is_conv, bool),
        )


def impute_conv_d(d_s1: np.ndarray) -> float:
    """Equal-probability d for convenience units: n1 / sum over S1 of 1/d."""
    return len(d_s1) / np.sum(1.0 / d_s1)


def assemble_inclusion(ds: Dataset, r_hat: np.ndarray, gamma_hat: np.ndarray) -> InclusionProbs:
    """Combine d*, r and gamma over the blended sample ``ds``.

    Convenience units without d* get the equal-probability imputation.
    """
    r_hat = np.asarray(r_hat, float)
    d = ds.d_star * r_hat
    missing = np.isnan(d)
    if missing.any():
        d = d.copy()
        d[missing] = impute_conv_d(d[ds.in_s1])
    return InclusionProbs.from_arrays(d, gamma_hat, ds.is_conv, r_hat)
