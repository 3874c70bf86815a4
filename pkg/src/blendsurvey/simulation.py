"""Monte Carlo studies: a caregiver-like pseudo-population and a synthetic coverage study.

Every iteration draws its random numbers from ``default_rng([seed, k])`` so
results do not depend on how iterations are scheduled across workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from .blending import Scheme
from .dataset import Dataset, Schema
from .errors import BlendError
from .estimation import (
    delta_test,
    make_report,
    posthoc_blend,
    srs_variance_of_mean,
    weighted_mean,
    z_quantile,
)
from .variance import jackknife, linearized_se_mean, make_groups
from .workflow import BlendConfig, fit_inclusion, scheme_weights

# ---------------------------------------------------------------------------
# pseudo-population

POP_SIZE = 940
DESCRIPTORS = (
    "female",
    "age",
    "coresident",
    "recipient_single",
    "deployed",
    "disability",
    "rating70",
    "tbi",
)
OUTCOME = "depression"
LATENT = "anxiety"
ROSTER = (OUTCOME, LATENT) + DESCRIPTORS

# outcome loadings on standardized descriptors (relative; rescaled to hit the target R^2)
_DEP_LOADINGS = {
    "female": 0.9,
    "age": -0.4,
    "coresident": 0.5,
    "recipient_single": 0.3,
    "deployed": 0.3,
    "disability": 0.6,
    "rating70": 0.5,
    "tbi": 0.6,
}
BASE_R2 = 0.14
DEP_ANX_CORR = 0.65
DEP_MEAN, DEP_SD = 8.0, 5.0
ANX_MEAN, ANX_SD = 7.0, 4.5


def _std(a: np.ndarray) -> np.ndarray:
    return (a - a.mean()) / a.std()


def build_pseudo_population(seed: int = 2018, n: int = POP_SIZE) -> pd.DataFrame:
    """Synthetic stand-in for the caregiver pseudo-population.

    Binary descriptors plus a 5-point age scale; depression loads on the
    descriptors with R^2 near 0.14, anxiety correlates with depression near 0.65.
    """
    rng = np.random.default_rng(seed)
    pop = {
        "female": rng.random(n) < 0.78,
        "age": rng.choice(np.arange(1, 6), size=n, p=[0.2, 0.3, 0.25, 0.15, 0.1]),
        "coresident": rng.random(n) < 0.65,
        "recipient_single": rng.random(n) < 0.3,
        "deployed": rng.random(n) < 0.7,
    }
    disability = rng.random(n) < 0.6
    pop["disability"] = disability
    pop["rating70"] = disability & (rng.random(n) < 0.5)
    pop["tbi"] = rng.random(n) < np.where(disability, 0.4, 0.15)
    df = pd.DataFrame({k: np.asarray(v, float) for k, v in pop.items()})

    signal = sum(_DEP_LOADINGS[k] * _std(df[k].to_numpy()) for k in DESCRIPTORS)
    signal = _std(signal)
    noise = rng.standard_normal(n)
    dep_z = math.sqrt(BASE_R2) * signal + math.sqrt(1 - BASE_R2) * noise
    anx_z = DEP_ANX_CORR * dep_z + math.sqrt(1 - DEP_ANX_CORR**2) * rng.standard_normal(n)
    df.insert(0, LATENT, ANX_MEAN + ANX_SD * anx_z)
    df.insert(0, OUTCOME, DEP_MEAN + DEP_SD * dep_z)
    return df


# ---------------------------------------------------------------------------
# settings

_BASE_COEFS = {
    "female": 4 / 3,
    "age": 0.0,
    "coresident": 1 / 3,
    "recipient_single": 1 / 3,
    "deployed": 1 / 3,
    "disability": 1.0,
    "rating70": 1.0,
    "tbi": 1.0,
}


@dataclass(frozen=True)
class SimSetting:
    """Convenience-selection model and the auxiliary set used for blending.

    ``selection_coefficients`` act on standardized variables; ``tau_on``
    names the variable (if any) whose coefficient is the tuning value tau.
    """

    label: str
    selection_coefficients: dict
    auxiliary_set: tuple
    intercept: float = -math.log(2)
    tau: float = 0.5
    tau_on: str | None = None
    K: int = 1000
    seed: int = 0

    @property
    def conv_coefficients(self) -> dict:
        coefs = {k: 0.0 for k in ROSTER}
        coefs.update(self.selection_coefficients)
        if self.tau_on is not None:
            coefs[self.tau_on] = self.tau
        return coefs


def pseudo_setting(number: int, tau: float = 0.5, K: int = 1000, seed: int = 0) -> SimSetting:
    """Settings 1-5: latent anxiety/depression selection and the auxiliary set vary."""
    aux = DESCRIPTORS
    table = {
        1: (None, aux),
        2: (None, aux + (LATENT,)),
        3: (LATENT, aux),
        4: (OUTCOME, aux),
        5: (OUTCOME, aux + (LATENT,)),
    }
    if number not in table:
        raise ValueError(f"unknown setting {number}")
    tau_on, aux_set = table[number]
    return SimSetting(
        label=f"setting{number}",
        selection_coefficients=dict(_BASE_COEFS),
        auxiliary_set=tuple(aux_set),
        tau=tau,
        tau_on=tau_on,
        K=K,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# sample draws

PROB_RATE = 0.16
RESPONSE_COEFS = {"female": 1 / 3, "age": -2 / 3}


def response_probability(pop: pd.DataFrame, coefs: dict = RESPONSE_COEFS) -> np.ndarray:
    """logit r = sum of coefficients times centered covariates."""
    eta = sum(c * (pop[k].to_numpy() - pop[k].mean()) for k, c in coefs.items())
    return expit(eta)


def draw_probability_sample(
    pop: pd.DataFrame,
    rng: np.random.Generator,
    d_star: float = PROB_RATE,
    response_coeffs: dict = RESPONSE_COEFS,
) -> tuple[np.ndarray, np.ndarray]:
    """Bernoulli(d_star) selection then Bernoulli(r) response.

    Returns (selected, responded) boolean masks over the population.
    """
    n = len(pop)
    u_sel, u_resp = rng.random(n), rng.random(n)
    selected = u_sel < d_star
    responded = selected & (u_resp < response_probability(pop, response_coeffs))
    return selected, responded


def selection_probability(pop: pd.DataFrame, setting: SimSetting) -> np.ndarray:
    # population moments for standardization
    eta = np.full(len(pop), setting.intercept)
    for name, b in setting.conv_coefficients.items():
        if b != 0:
            eta += b * _std(pop[name].to_numpy())
    return expit(eta)


def draw_convenience_sample(
    pop: pd.DataFrame, setting: SimSetting, rng: np.random.Generator, exclude: np.ndarray | None = None
) -> np.ndarray:
    """Bernoulli(rho) selection; units in ``exclude`` (the probability sample) are dropped."""
    chosen = rng.random(len(pop)) < selection_probability(pop, setting)
    if exclude is not None:
        chosen &= ~exclude
    return chosen


def to_dataset(
    pop: pd.DataFrame,
    selected: np.ndarray,
    responded: np.ndarray,
    conv: np.ndarray,
    aux: Sequence[str],
    outcomes: Sequence[str],
    d_star: float,
) -> Dataset:
    rows = np.flatnonzero(selected | conv)
    sub = pop.iloc[rows]
    is_conv = conv[rows]
    return Dataset(
        ids=rows.astype(str),
        is_conv=is_conv,
        x=sub[list(aux)].to_numpy(float),
        y=sub[list(outcomes)].to_numpy(float),
        d_star=np.full(len(rows), d_star),
        schema=Schema(tuple(aux), tuple(outcomes)),
        respondent=responded[rows] | is_conv,
    )


# ---------------------------------------------------------------------------
# pseudo-population study

PSEUDO_SCHEMES = ("KP", "unw", "SPS", "DPS", "SC", "DC")
POSTHOC = ("kbarPS", "kbarC")
RESPONSE_VARS = ("female", "age")


def _sim_config(setting: SimSetting) -> BlendConfig:
    return BlendConfig(
        aux_vars=setting.auxiliary_set,
        response_vars=RESPONSE_VARS,
        trim_pct=0.0,
        init="equal",
    )


def _disjoint_components(ds: Dataset, cfg: BlendConfig, starts=None) -> dict:
    """Per-sample means under the two disjoint schemes (theta1, theta2)."""
    fit = fit_inclusion(ds, cfg, starts)
    s = fit.blended
    y = s.outcome(OUTCOME)
    conv = s.is_conv
    out = {
        "ps1": weighted_mean(y[~conv], 1 / fit.probs.d_hat[~conv]),
        "ps2": weighted_mean(y[conv], 1 / fit.probs.q_hat[conv]),
    }
    try:
        w = scheme_weights(fit, Scheme.DC, cfg).weights
        out["c1"] = weighted_mean(y[~conv], w[~conv])
        out["c2"] = weighted_mean(y[conv], w[conv])
    except BlendError:
        out["c1"] = out["c2"] = float("nan")
    return out


def pseudo_iteration(
    pop: pd.DataFrame, setting: SimSetting, k: int, posthoc: bool = True, G: int = 40
) -> dict:
    """One draw of both samples and all estimators; failed schemes give NaN."""
    rng = np.random.default_rng([setting.seed, k])
    selected, responded = draw_probability_sample(pop, rng)
    conv = draw_convenience_sample(pop, setting, rng, exclude=selected)
    cfg = _sim_config(setting)
    ds = to_dataset(pop, selected, responded, conv, setting.auxiliary_set, (OUTCOME,), PROB_RATE)

    nan = float("nan")
    est = dict.fromkeys(PSEUDO_SCHEMES + POSTHOC, nan)
    deff = dict.fromkeys(PSEUDO_SCHEMES, nan)
    pval = dict.fromkeys(PSEUDO_SCHEMES, nan)
    fit = fit_inclusion(ds, cfg)
    s = fit.blended
    y = s.outcome(OUTCOME)
    weights = {
        "KP": np.where(s.is_conv, 0.0, 1.0),
        "unw": np.ones(len(s)),
    }
    for name in ("SPS", "DPS", "SC", "DC"):
        try:
            weights[name] = scheme_weights(fit, Scheme(name), cfg).weights
        except BlendError:
            pass
    for name, w in weights.items():
        est[name] = weighted_mean(y, w)
        se = linearized_se_mean(y, w)
        # SRS reference of the same size as the sample the scheme draws on
        n_sampled = int((~s.is_conv).sum()) if name == "KP" else len(s)
        deff[name] = se**2 / srs_variance_of_mean(y, w, n_sampled)
        if name != "KP":
            pval[name] = delta_test(y, w, s.is_conv).p_value

    if posthoc:
        groups = make_groups(ds, G, seed=[setting.seed, k, 1])
        starts = {"response": fit.response.model.params, "gamma": fit.gamma.model.params}
        jk = jackknife(ds, lambda d: _disjoint_components(d, cfg, starts), groups)
        cov = jk.covariance
        for label, (a, b) in (("kbarPS", ("ps1", "ps2")), ("kbarC", ("c1", "c2"))):
            i, j = jk.names.index(a), jk.names.index(b)
            if not np.all(np.isfinite(jk.replicates[:, [i, j]])):
                continue
            t1 = make_report(a, jk.estimate[i], math.sqrt(cov[i, i]), nan, "JACKKNIFE", 0)
            t2 = make_report(b, jk.estimate[j], math.sqrt(cov[j, j]), nan, "JACKKNIFE", 0)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    _, rep = posthoc_blend(t1, t2, cov[i, j])
                est[label] = rep.estimate
            except BlendError:
                pass
    return {"estimate": est, "deff": deff, "p": pval}


@dataclass
class SimMetrics:
    """Per-scheme summary over iterations (percent bias/rMSE relative to the benchmark)."""

    label: str
    K: int
    benchmark: float
    bias: dict
    rmse: dict
    rejection_rate: dict
    mean_deff: dict
    failures: dict
    coverage: dict = field(default_factory=dict)

    def table(self) -> pd.DataFrame:
        cols = list(self.bias)
        rows = {
            "DEFF": [self.mean_deff.get(c, np.nan) for c in cols],
            "Bias": [self.bias[c] for c in cols],
            "rMSE": [self.rmse[c] for c in cols],
            "Rej. rate": [self.rejection_rate.get(c, np.nan) for c in cols],
            "Failures": [self.failures[c] for c in cols],
        }
        return pd.DataFrame(rows, index=cols).T


def summarize_pseudo(label: str, results: list[dict], benchmark: float, alpha: float = 0.05) -> SimMetrics:
    names = PSEUDO_SCHEMES + POSTHOC
    est = np.array([[r["estimate"][n] for n in names] for r in results])
    e = 100 * (est - benchmark) / benchmark
    bias, rmse, fails = {}, {}, {}
    for j, n in enumerate(names):
        ok = np.isfinite(e[:, j])
        fails[n] = int((~ok).sum())
        bias[n] = float(e[ok, j].mean()) if ok.any() else np.nan
        rmse[n] = float(np.sqrt(np.mean(e[ok, j] ** 2))) if ok.any() else np.nan
    rej, deff = {}, {}
    for n in PSEUDO_SCHEMES:
        d = np.array([r["deff"][n] for r in results])
        deff[n] = float(np.nanmean(d)) if np.isfinite(d).any() else np.nan
        if n == "KP":
            continue
        p = np.array([r["p"][n] for r in results])
        p = p[np.isfinite(p)]
        rej[n] = float(np.mean(p <= alpha)) if p.size else np.nan
    return SimMetrics(label, len(results), benchmark, bias, rmse, rej, deff, fails)


def _run(fn, args_list, workers: int):
    if workers <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args_list), chunksize=max(1, len(args_list) // (4 * workers))))


def _pseudo_chunk(pop, setting, ks, posthoc, G):
    return [pseudo_iteration(pop, setting, k, posthoc, G) for k in ks]


def run_pseudo_study(
    setting: SimSetting,
    K: int | None = None,
    seed: int | None = None,
    posthoc: bool = True,
    G: int = 40,
    pop_seed: int = 2018,
    workers: int = 1,
) -> SimMetrics:
    """Repeat sample draws from the pseudo-population and summarize every scheme."""
    K = setting.K if K is None else K
    if K < 1:
        raise ValueError("K must be at least 1")
    if seed is not None:
        setting = SimSetting(**{**setting.__dict__, "seed": seed})
    pop = build_pseudo_population(pop_seed)
    benchmark = float(pop[OUTCOME].mean())
    chunks = [list(range(i, K, max(workers, 1))) for i in range(max(workers, 1))]
    parts = _run(_pseudo_chunk, [(pop, setting, c, posthoc, G) for c in chunks], workers)
    by_k = {}
    for c, res in zip(chunks, parts):
        by_k.update(zip(c, res))
    results = [by_k[k] for k in range(K)]
    return summarize_pseudo(setting.label, results, benchmark)


# ---------------------------------------------------------------------------
# synthetic coverage study

SYN_N = 10_000
SYN_N1 = 200
SYN_CONV_INTERCEPT = -4.2
SYN_CONV_SLOPE = 0.5
SYN_RESPONSE_SLOPE = 0.15
SYN_METHODS = ("prob_only", "linearization", "jackknife")


def r2_parameters(r2: float) -> tuple[float, float]:
    """(beta, error variance) giving R^2 = 2 beta^2 / (2 beta^2 + s2) with Var(Y) = 1."""
    if not 0 <= r2 < 1:
        raise ValueError("R^2 must lie in [0, 1)")
    return math.sqrt(r2 / 2), 1.0 - r2


def synthetic_population(rng: np.random.Generator, N: int = SYN_N) -> tuple[np.ndarray, np.ndarray]:
    """Standard trivariate normal X and standard normal noise."""
    return rng.standard_normal((N, 3)), rng.standard_normal(N)


def synthetic_conv_probability(X: np.ndarray) -> np.ndarray:
    return expit(SYN_CONV_INTERCEPT + SYN_CONV_SLOPE * (X[:, 0] + X[:, 1]))


def _synthetic_config() -> BlendConfig:
    return BlendConfig(aux_vars=("x1", "x2"), response_vars=("x3",), trim_pct=0.0)


def _sps_means(ds: Dataset, cfg: BlendConfig, starts=None) -> dict:
    fit = fit_inclusion(ds, cfg, starts)
    w = 1.0 / fit.probs.p_hat
    s = fit.blended
    return {name: weighted_mean(s.outcome(name), w) for name in s.schema.outcomes}


def synthetic_iteration(k: int, seed: int, r2_grid: Sequence[float], G: int = 40, alpha: float = 0.05) -> dict:
    """One population and sample draw; the outcome for every R^2 shares the same draws."""
    rng = np.random.default_rng([seed, k])
    X, eps = synthetic_population(rng)
    N = len(X)
    s1_star = rng.choice(N, SYN_N1, replace=False)
    selected = np.zeros(N, bool)
    selected[s1_star] = True
    responded = selected & (rng.random(N) < expit(SYN_RESPONSE_SLOPE * X[:, 2]))
    conv = (rng.random(N) < synthetic_conv_probability(X)) & ~selected

    names = [f"y{j}" for j in range(len(r2_grid))]
    cols = {"x1": X[:, 0], "x2": X[:, 1], "x3": X[:, 2]}
    for name, r2 in zip(names, r2_grid):
        beta, s2 = r2_parameters(r2)
        cols[name] = beta * (X[:, 0] + X[:, 1]) + math.sqrt(s2) * eps
    pop = pd.DataFrame(cols)
    ds = to_dataset(pop, selected, responded, conv, ("x1", "x2", "x3"), names, SYN_N1 / N)

    cfg = _synthetic_config()
    fit = fit_inclusion(ds, cfg)
    s = fit.blended
    w_sps = 1.0 / fit.probs.p_hat
    s1 = s.in_s1
    starts = {"response": fit.response.model.params, "gamma": fit.gamma.model.params}
    jk = jackknife(ds, lambda d: _sps_means(d, cfg, starts), make_groups(ds, G, seed=[seed, k, 1]))
    jk_se = jk.se

    z = z_quantile(alpha)
    out = {m: {"est": [], "se": [], "cover": []} for m in SYN_METHODS}
    for name in names:
        y = s.outcome(name)
        w1 = 1.0 / fit.probs.d_hat[s1]
        rows = {
            "prob_only": (weighted_mean(y[s1], w1), linearized_se_mean(y[s1], w1)),
            "linearization": (weighted_mean(y, w_sps), linearized_se_mean(y, w_sps)),
            "jackknife": (weighted_mean(y, w_sps), jk_se[name]),
        }
        for m, (est, se) in rows.items():
            out[m]["est"].append(est)
            out[m]["se"].append(se)
            out[m]["cover"].append(abs(est) <= z * se)  # true mean is 0
    return out


def _synthetic_chunk(ks, seed, r2_grid, G):
    return [synthetic_iteration(k, seed, r2_grid, G) for k in ks]


def run_synthetic_study(
    r2_grid: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 0.9),
    K: int = 2000,
    seed: int = 0,
    G: int = 40,
    workers: int = 1,
) -> pd.DataFrame:
    """Coverage and mean standard error of the SPS-blended mean for each R^2.

    Returns one row per R^2 with columns ``coverage_<method>``, ``se_<method>``
    and ``mean_<method>`` for prob_only, linearization and jackknife.
    """
    r2_grid = [float(r) for r in r2_grid]
    for r2 in r2_grid:
        r2_parameters(r2)
    w = max(workers, 1)
    chunks = [list(range(i, K, w)) for i in range(w)]
    parts = _run(_synthetic_chunk, [(c, seed, r2_grid, G) for c in chunks], workers)
    by_k = {}
    for c, res in zip(chunks, parts):
        by_k.update(zip(c, res))
    results = [by_k[k] for k in range(K)]
    rows = []
    for j, r2 in enumerate(r2_grid):
        row = {"r2": r2, "K": K}
        for m in SYN_METHODS:
            row[f"coverage_{m}"] = float(np.mean([r[m]["cover"][j] for r in results]))
            row[f"se_{m}"] = float(np.mean([r[m]["se"][j] for r in results]))
            row[f"mean_{m}"] = float(np.mean([r[m]["est"][j] for r in results]))
        rows.append(row)
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# adequacy-test calibration study


def _delta(ds: Dataset, cfg: BlendConfig, starts=None) -> dict:
    fit = fit_inclusion(ds, cfg, starts)
    ws = scheme_weights(fit, Scheme.DPS, cfg)
    return {"delta": delta_test(fit.blended.outcome("y"), ws.weights, ws.is_conv).delta_hat}


def adequacy_iteration(
    k: int, seed: int, shift: float = 0.0, n1: int = 200, n2: int = 200, G: int | None = 40
) -> float:
    """p-value of the blending-adequacy test (DPS weights) for one draw.

    Both samples come from the same superpopulation of (x1, x2, latent);
    ``shift`` moves the latent mean of the convenience sample by that many SDs.
    The outcome depends on the latent variable, which is not an auxiliary.
    With ``G`` groups the se of delta is a jackknife that refits the propensity
    model per replicate; ``G=None`` uses the fixed-weight sandwich se.
    """
    rng = np.random.default_rng([seed, k])
    n = n1 + n2
    X = rng.standard_normal((n, 2))
    latent = rng.standard_normal(n)
    conv = np.arange(n) >= n1
    latent[conv] += shift
    y = X[:, 0] + X[:, 1] + latent + rng.standard_normal(n)
    ds = Dataset(
        ids=np.arange(n).astype(str),
        is_conv=conv,
        x=X,
        y=y[:, None],
        d_star=np.full(n, n1 / SYN_N),
        schema=Schema(("x1", "x2"), ("y",)),
    )
    cfg = BlendConfig(aux_vars=("x1", "x2"), trim_pct=0.0)
    fit = fit_inclusion(ds, cfg)
    ws = scheme_weights(fit, Scheme.DPS, cfg)
    se = None
    if G is not None:
        starts = {"gamma": fit.gamma.model.params}
        jk = jackknife(ds, lambda d: _delta(d, cfg, starts), make_groups(ds, G, seed=[seed, k, 1]))
        se = jk.se["delta"]
    return delta_test(fit.blended.outcome("y"), ws.weights, ws.is_conv, se).p_value


def _adequacy_chunk(ks, seed, shift, G):
    return [adequacy_iteration(k, seed, shift, G=G) for k in ks]


def run_adequacy_study(
    K: int = 2000, seed: int = 0, shift: float = 0.0, alpha: float = 0.05, G: int | None = 40, workers: int = 1
) -> float:
    """Rejection rate of the adequacy test at level ``alpha``."""
    w = max(workers, 1)
    chunks = [list(range(i, K, w)) for i in range(w)]
    parts = _run(_adequacy_chunk, [(c, seed, shift, G) for c in chunks], workers)
    p = np.concatenate([np.asarray(x, float) for x in parts])
    return float(np.mean(p <= alpha))
