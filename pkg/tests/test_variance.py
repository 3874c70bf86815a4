import numpy as np
import pytest

from blendsurvey.blending import Scheme
from blendsurvey.errors import NotEnoughUnits, ReplicateFailure, TooFewUnits, RakingNonconvergence
from blendsurvey.estimation import weighted_mean
from blendsurvey.variance import (
    jackknife,
    linearized_cov_wls,
    linearized_se_mean,
    make_groups,
)
from blendsurvey.workflow import BlendConfig, compute_weights
from conftest import make_dataset
from oracles import fd_linearized_var_mean


def test_linearized_se_basic():
    assert linearized_se_mean(np.full(5, 2.0), np.arange(1.0, 6.0)) == 0.0
    y = np.random.default_rng(0).standard_normal(25)
    assert linearized_se_mean(y, np.full(25, 4.0)) == pytest.approx(y.std(ddof=1) / 5, rel=1e-12)
    with pytest.raises(NotEnoughUnits):
        linearized_se_mean([1.0, 2.0], [1.0, 0.0])


def test_linearized_matches_finite_difference_oracle():
    rng = np.random.default_rng(1)
    y, w = rng.standard_normal(40), rng.uniform(0.5, 8, 40)
    assert linearized_se_mean(y, w) ** 2 == pytest.approx(fd_linearized_var_mean(y, w), rel=1e-8)


def test_wls_cov_nesting_and_zero():
    rng = np.random.default_rng(2)
    y, w = rng.standard_normal(30), rng.uniform(1, 3, 30)
    cov = linearized_cov_wls(y, np.ones((30, 1)), w)
    assert cov[0, 0] == pytest.approx(linearized_se_mean(y, w) ** 2, rel=1e-10)
    X = np.column_stack([np.ones(30), rng.standard_normal(30)])
    np.testing.assert_allclose(linearized_cov_wls(X @ [1, 2], X, w), 0.0, atol=1e-25)


def test_wls_cov_agrees_with_jackknife_large_n():
    rng = np.random.default_rng(3)
    n = 2000
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    y = X @ [1.0, 0.5] + rng.standard_normal(n) * (1 + np.abs(X[:, 1]))
    w = rng.uniform(1, 5, n)
    lin = np.sqrt(np.diag(linearized_cov_wls(y, X, w)))
    G = 500
    groups = make_groups(n, G=G, seed=0)
    reps = []
    for g in range(1, G + 1):
        keep = groups.assignment != g
        Xk = X[keep] * w[keep, None]
        reps.append(np.linalg.solve(Xk.T @ X[keep], Xk.T @ y[keep]))
    reps = np.array(reps)
    jk = np.sqrt((G - 1) / G * ((reps - reps.mean(0)) ** 2).sum(0))
    np.testing.assert_allclose(jk, lin, rtol=0.10)


def test_groups():
    g = make_groups(40, 40, seed=5)
    assert sorted(g.sizes()) == [1] * 40
    g1, g2 = make_groups(103, 10, seed=9), make_groups(103, 10, seed=9)
    np.testing.assert_array_equal(g1.assignment, g2.assignment)
    assert g1.sizes().max() - g1.sizes().min() <= 1 and g1.sizes().sum() == 103
    with pytest.raises(TooFewUnits):
        make_groups(10, 20)


def _mean_pipeline(ds):
    return {"mean": float(np.mean(ds.outcome("y")))}


def test_jackknife_leave_one_out_identity():
    ds = make_dataset(n1=15, n2=10, seed=2)
    res = jackknife(ds, _mean_pipeline, make_groups(ds, G=len(ds), seed=0))
    y = ds.outcome("y")
    assert res.se["mean"] == pytest.approx(y.std(ddof=1) / np.sqrt(len(y)), rel=1e-12)


def test_jackknife_constant_and_relabel_invariance():
    ds = make_dataset(n1=30, n2=30, seed=3)
    res = jackknife(ds, lambda d: {"c": 1.0}, make_groups(ds, 10))
    assert res.se["c"] == 0.0
    g = make_groups(ds, 10, seed=4)
    relabeled = type(g)(g.G, (g.assignment * 3) % 10 + 1, g.seed)  # a permutation of labels
    a = jackknife(ds, _mean_pipeline, g).se["mean"]
    b = jackknife(ds, _mean_pipeline, relabeled).se["mean"]
    assert a == pytest.approx(b, rel=1e-12)


def test_jackknife_fixed_weights_agrees_with_linearization():
    # with no reweighting the two methods target the same quantity
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(30):
        ds = make_dataset(n1=200, n2=200, seed=int(rng.integers(1 << 30)))
        w = rng.uniform(1, 5, len(ds))
        wmap = dict(zip(ds.ids, w))

        def pipe(d):
            return {"m": weighted_mean(d.outcome("y"), [wmap[i] for i in d.ids])}

        jk = jackknife(ds, pipe, make_groups(ds, 40, seed=1)).se["m"]
        ratios.append(jk / linearized_se_mean(ds.outcome("y"), w))
    assert abs(np.mean(ratios) - 1) < 0.05


def test_jackknife_covariance_symmetry():
    ds = make_dataset(n1=50, n2=50, seed=8)

    def pipe(d):
        y = d.outcome("y")
        return {"a": float(y.mean()), "b": float(y[d.is_conv].mean())}

    res = jackknife(ds, pipe, make_groups(ds, 20, seed=0))
    assert res.cov("a", "b") == pytest.approx(res.cov("b", "a"))
    assert res.cov("a", "a") == pytest.approx(res.se["a"] ** 2)


def test_replicate_failure_names_group():
    ds = make_dataset(n1=40, n2=40, seed=1)
    groups = make_groups(ds, 8, seed=0)
    bad = set(ds.ids[groups.members(3)])

    def pipe(d):
        if not bad & set(d.ids):
            raise RakingNonconvergence("boom")
        return {"m": 0.0}

    with pytest.raises(ReplicateFailure) as info:
        jackknife(ds, pipe, groups)
    assert info.value.group == 3


def test_jackknife_with_reweighting_runs():
    ds = make_dataset(n1=120, n2=120, seed=11, conv_slope=0.7)
    cfg = BlendConfig(aux_vars=["x1", "x2"], scheme=Scheme.SC, trim_pct=0.0)

    def pipe(d):
        _, ws = compute_weights(d, cfg)
        return {"m": weighted_mean(d.blended().outcome("y"), ws.weights)}

    res = jackknife(ds, pipe, make_groups(ds, 20, seed=2))
    assert res.se["m"] > 0 and np.isfinite(res.se["m"])
