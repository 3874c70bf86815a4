"""Acceptance criteria at their stated tolerances; each test prints one PASS/FAIL line.

The Monte Carlo criteria (4, 5, 6, 7) run full-size studies and take several
minutes on one CPU; set BLENDSURVEY_WORKERS to spread iterations over processes.
"""

import os
import time
import warnings

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from blendsurvey.blending import kish_deff, kish_kappa, mix
from blendsurvey.calibration import rake
from blendsurvey.estimation import make_report, posthoc_blend, weighted_total
from blendsurvey.propensity import fit_logistic
from blendsurvey.simulation import pseudo_setting, run_adequacy_study, run_pseudo_study, run_synthetic_study
from oracles import enumerate_poisson_expectation, grid_logistic_mle, kappa_grid

WORKERS = int(os.environ.get("BLENDSURVEY_WORKERS", "1"))
SEED = 20261018
BLENDS = ("unw", "SPS", "DPS", "SC", "DC")


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {label}: {detail}", flush=True)
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def pseudo_studies():
    return {
        1: run_pseudo_study(pseudo_setting(1, tau=0.5), K=1000, seed=SEED, posthoc=True, workers=WORKERS),
        4: run_pseudo_study(pseudo_setting(4, tau=0.5), K=1000, seed=SEED, posthoc=False, workers=WORKERS),
        5: run_pseudo_study(pseudo_setting(5, tau=0.5), K=1000, seed=SEED, posthoc=False, workers=WORKERS),
    }


def test_criterion_1_calibration_constraints(verdict):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst_res, worst_closed, n_closed = 0.0, 0.0, 0
    for _ in range(100):
        n = int(rng.integers(20, 201))
        k = int(rng.integers(1, 7))
        X = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
        w0 = rng.uniform(1, 10, n)
        # targets are the totals of a positive reweighting, so the problem is feasible
        t = X.T @ (w0 * rng.uniform(0.7, 1.3, n))
        sol = rake(w0, X, t)
        res = np.max(np.abs(X.T @ sol.weights - t) / np.maximum(1.0, np.abs(t)))
        worst_res = max(worst_res, res)
        xi = np.linalg.solve((X * w0[:, None]).T @ X, t - X.T @ w0)
        closed = w0 * (1 + X @ xi)
        if np.all(closed > 0):
            n_closed += 1
            worst_closed = max(worst_closed, np.max(np.abs(sol.weights - closed) / closed))
    elapsed = time.perf_counter() - t0
    ok = worst_res <= 1e-8 and worst_closed <= 1e-10 and n_closed > 0 and elapsed < 10
    verdict(
        "1", ok,
        f"max relative residual {worst_res:.2e} (<= 1e-8); closed-form max rel diff {worst_closed:.2e} "
        f"over {n_closed} unbounded instances (<= 1e-10); {elapsed:.2f} s (< 10 s)",
    )


def test_criterion_2_kappa_optimality(verdict):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst_k, worst_deff = 0.0, -np.inf
    for _ in range(50):
        n1, n2 = int(rng.integers(5, 200)), int(rng.integers(5, 200))
        a = 1 / rng.uniform(0.01, 0.6, n1)
        b = 1 / rng.uniform(0.002, 0.4, n2)
        kappa = kish_kappa(a, b)
        ks, deffs = kappa_grid(a, b)
        w, _ = mix(a, b, np.r_[np.zeros(n1, bool), np.ones(n2, bool)], kappa)
        worst_k = max(worst_k, abs(kappa - ks[np.argmin(deffs)]))
        worst_deff = max(worst_deff, kish_deff(w) - deffs.min())
    elapsed = time.perf_counter() - t0
    ok = worst_k <= 1e-3 and worst_deff <= 1e-12 and elapsed < 10
    verdict(
        "2", ok,
        f"max |kappa - grid argmin| {worst_k:.2e} (<= 1e-3); deff(kappa) - grid min <= {worst_deff:.2e}; "
        f"{elapsed:.2f} s (< 10 s)",
    )


def test_criterion_3_ht_exactness(verdict):
    y = np.array([3.0, -1.0, 7.5, 0.2, 4.0, 10.0])
    d = np.array([0.1, 0.35, 0.5, 0.8, 0.25, 0.6])
    # convenience inclusion q = d * gamma / (1 - gamma) for an arbitrary gamma
    gamma = np.array([0.3, 0.5, 0.1, 0.05, 0.4, 0.2])
    q = d * gamma / (1 - gamma)
    errs = []
    for probs in (d, q):
        e = enumerate_poisson_expectation(y, probs, lambda m, p=probs: weighted_total(y[m], 1 / p[m]) / len(y))
        errs.append(abs(e - y.mean()))
    ok = max(errs) <= 1e-12
    verdict("3", ok, f"|E[HT mean] - population mean| = {errs[0]:.1e} (S1), {errs[1]:.1e} (S2) (<= 1e-12)")


def test_criterion_4_synthetic_coverage(verdict):
    grid = [0.0, 0.25, 0.5, 0.75, 0.9]
    df = run_synthetic_study(grid, K=2000, seed=SEED, workers=WORKERS)
    jk, lin = df["coverage_jackknife"], df["coverage_linearization"]
    a = bool(((jk >= 0.93) & (jk <= 0.97)).all())
    b = bool(lin.iloc[-1] < 0.92 and lin.iloc[-1] < jk.iloc[-1])
    rho = stats.spearmanr(df["r2"], df["se_jackknife"]).statistic
    spread = df["se_linearization"].max() / df["se_linearization"].min() - 1
    c = bool(rho > 0 and spread <= 0.10)
    verdict(
        "4", a and b and c,
        f"(a) jackknife coverage {np.round(jk.to_numpy(), 3).tolist()} in [0.93, 0.97]: {a}; "
        f"(b) linearization coverage at R2=0.9 {lin.iloc[-1]:.3f} < 0.92 and < {jk.iloc[-1]:.3f}: {b}; "
        f"(c) jackknife se Spearman {rho:.2f} > 0, linearization se spread {100 * spread:.1f}% <= 10%: {c}",
    )


def test_criterion_5_pseudo_orderings(verdict, pseudo_studies):
    s1, s4, s5 = pseudo_studies[1], pseudo_studies[4], pseudo_studies[5]
    weighted = ("SPS", "DPS", "SC", "DC")
    a = all(s1.rmse[j] < s1.rmse["KP"] for j in weighted) and all(
        abs(s1.bias[j]) < abs(s1.bias["unw"]) for j in ("SPS", "SC")
    )
    b = all(0.03 <= s1.rejection_rate[j] <= 0.08 for j in ("DPS", "DC"))
    c = all(abs(s4.bias[j]) > abs(s1.bias[j]) for j in BLENDS)
    d = all(abs(s5.bias[j]) < abs(s4.bias[j]) for j in ("SPS", "SC"))
    e = s1.mean_deff["SPS"] < s1.mean_deff["DPS"] and s1.mean_deff["SC"] < s1.mean_deff["DC"]
    fmt = lambda m, keys: ", ".join(f"{k} {m[k]:.2f}" for k in keys)  # noqa: E731
    verdict(
        "5", all([a, b, c, d, e]),
        f"(a) rMSE [{fmt(s1.rmse, ('KP',) + weighted)}], |bias| [{fmt(s1.bias, ('unw', 'SPS', 'SC'))}]: {a}; "
        f"(b) rejection DPS {s1.rejection_rate['DPS']:.3f}, DC {s1.rejection_rate['DC']:.3f} in [0.03, 0.08]: {b}; "
        f"(c) setting-4 bias [{fmt(s4.bias, BLENDS)}] > setting-1 bias [{fmt(s1.bias, BLENDS)}]: {c}; "
        f"(d) setting-5 bias [{fmt(s5.bias, ('SPS', 'SC'))}] < setting-4: {d}; "
        f"(e) deff SPS {s1.mean_deff['SPS']:.2f} < DPS {s1.mean_deff['DPS']:.2f}, "
        f"SC {s1.mean_deff['SC']:.2f} < DC {s1.mean_deff['DC']:.2f}: {e}",
    )


def test_criterion_6_posthoc(verdict, pseudo_studies):
    rng = np.random.default_rng(SEED)
    worst = -np.inf
    ks = np.linspace(-0.5, 1.5, 20001)
    for _ in range(50):
        v1, v2 = rng.uniform(0.1, 5.0, 2)
        c = rng.uniform(-0.95, 0.95) * np.sqrt(v1 * v2)
        t1 = make_report("a", 0.0, np.sqrt(v1), np.nan, "LINEARIZATION", 10)
        t2 = make_report("b", 0.0, np.sqrt(v2), np.nan, "LINEARIZATION", 10)
        with warnings.catch_warnings():
            # kbar outside [0, 1] is legitimate for strongly correlated estimators
            warnings.simplefilter("ignore", RuntimeWarning)
            kbar, rep = posthoc_blend(t1, t2, c)
        grid_var = ks**2 * v1 + (1 - ks) ** 2 * v2 + 2 * ks * (1 - ks) * c
        worst = max(worst, rep.se**2 - grid_var.min())
    a = worst <= 1e-12
    s1 = pseudo_studies[1]
    gaps = {
        pair: (abs(s1.bias[pair[0]] - s1.bias[pair[1]]), abs(s1.rmse[pair[0]] - s1.rmse[pair[1]]))
        for pair in (("kbarPS", "DPS"), ("kbarC", "DC"))
    }
    b = all(g < 1.0 for pair in gaps.values() for g in pair)
    detail = "; ".join(f"{p[0]} vs {p[1]}: |dbias| {g[0]:.2f}, |drMSE| {g[1]:.2f}" for p, g in gaps.items())
    verdict(
        "6", a and b,
        f"(a) Var at kbar - grid min <= {worst:.1e} over 50 triples: {a}; "
        f"(b) setting 1 {detail} (< 1 percentage point): {b}",
    )


def test_criterion_7_adequacy_calibration(verdict):
    size = run_adequacy_study(K=2000, seed=SEED, shift=0.0, workers=WORKERS)
    power = run_adequacy_study(K=500, seed=SEED + 1, shift=1.0, workers=WORKERS)
    ok = abs(size - 0.05) <= 0.02 and power > 0.5
    verdict("7", ok, f"null rejection rate {size:.4f} (0.05 +/- 0.02, K=2000); power {power:.3f} (> 0.5, K=500)")


def test_criterion_8_logistic_oracle(verdict):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(30, 80))
        k = int(rng.integers(1, 4))
        X = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
        beta = rng.uniform(-1, 1, k)
        y = (rng.random(n) < expit(X @ beta)).astype(float)
        y[:2] = [0.0, 1.0]
        m = fit_logistic(X, y)
        worst = max(worst, np.max(np.abs(m.params - grid_logistic_mle(X, y))))
    verdict("8", worst <= 1e-4, f"max |IRLS - grid MLE| {worst:.2e} per coefficient (<= 1e-4)")

