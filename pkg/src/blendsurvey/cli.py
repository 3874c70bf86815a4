"""Command-line front end: weights, estimate, adequacy, benchmarks, simulate.

Every subcommand accepts ``--config run.yaml``; flags given on the command
line override the matching config keys. Outputs go to ``--out-dir`` as
comma-separated tables plus a ``manifest.json`` (config echo, package
versions, seed). Errors exit with the code of their class (see errors.py).
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd
import scipy
import yaml

from . import __version__
from .blending import kish_deff, write_weights
from .calibration import BenchmarkVector, write_benchmarks
from .config import RunConfig, load_config, parse_formula
from .dataset import INTERCEPT, Dataset, load_dataset
from .errors import BadSpec, BlendError
from .estimation import (
    VarianceMethod,
    adequacy_test,
    estimate_mean,
    make_report,
    two_sided_p,
    weighted_mean,
    wls_regression,
)
from .simulation import (
    ROSTER,
    SimSetting,
    pseudo_setting,
    run_pseudo_study,
    run_synthetic_study,
)
from .variance import jackknife, make_groups
from .workflow import benchmarks, compute_weights, fit_inclusion

FLOAT_FORMAT = "%.10g"


# ---------------------------------------------------------------------------
# helpers


def _versions() -> dict:
    return {
        "blendsurvey": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, config: dict, seed, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "versions": _versions(),
        "outputs": sorted(outputs),
    }
    text = json.dumps(manifest, indent=2, sort_keys=True, default=str)
    (out / "manifest.json").write_text(text + "\n", encoding="utf-8")


def _write_table(df: pd.DataFrame, path: Path, index: bool = False) -> None:
    df.to_csv(path, index=index, float_format=FLOAT_FORMAT)


def _load(cfg: RunConfig) -> Dataset:
    if not cfg.data:
        raise BadSpec("no data file given (--data or 'data' in the config)")
    if not cfg.aux:
        raise BadSpec("no auxiliary variables given (--aux or 'aux' in the config)")
    return load_dataset(cfg.data, cfg.schema())


# ---------------------------------------------------------------------------
# weights


def _balance_table(fit, ws, target: BenchmarkVector) -> pd.DataFrame:
    """Weighted auxiliary means against benchmark means."""
    s = fit.blended
    N = target.population_size
    rows = []
    for name, total in zip(target.names, target.totals):
        if name == INTERCEPT:
            continue
        x = s.aux(name)
        conv = s.is_conv
        rows.append(
            {
                "variable": name,
                "benchmark_mean": total / N if N else np.nan,
                "weighted_mean": weighted_mean(x, ws.weights),
                "prob_mean": float(x[~conv].mean()),
                "conv_mean": float(x[conv].mean()),
            }
        )
    df = pd.DataFrame(rows)
    if len(df):
        df["difference"] = df["weighted_mean"] - df["benchmark_mean"]
    return df


def cmd_weights(cfg: RunConfig) -> list[str]:
    ds = _load(cfg)
    bcfg = cfg.blend_config()
    fit, ws = compute_weights(ds, bcfg)
    out = _out_dir(cfg.out_dir)
    write_weights(ws, fit.blended.ids, out / "weights.csv")
    target = benchmarks(fit, bcfg)
    _write_table(_balance_table(fit, ws, target), out / "balance.csv")
    report = {
        "scheme": ws.scheme.value,
        "n1": fit.blended.n1,
        "n2": fit.blended.n2,
        "kappa": ws.kappa,
        "kish_deff": kish_deff(ws.weights),
        "weight_total": ws.total,
        "trimmed": ws.trimmed,
        "trim_bounds": ws.trim_bounds,
        "n_trimmed": int(ws.trim_mask.sum()) if ws.trim_mask is not None else 0,
        "gamma_model": _model_record(fit.gamma.model),
        "response_model": _model_record(fit.response.model),
    }
    (out / "weights_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return ["weights.csv", "balance.csv", "weights_report.json"]


def _model_record(model) -> dict | None:
    if model is None:
        return None
    return {
        "coefficients": {k: float(v) for k, v in model.coefficients.items()},
        "converged": bool(model.converged),
        "iterations": int(model.iterations),
        "separated": bool(model.separated),
    }


# ---------------------------------------------------------------------------
# estimate


def _estimands(s: Dataset, w: np.ndarray, cfg: RunConfig) -> dict:
    """Point estimates of every requested estimand under weights ``w``."""
    out = {}
    for name in cfg.outcomes:
        y = s.variable(name)
        ok = ~np.isnan(y)
        out[f"mean({name})"] = weighted_mean(y[ok], w[ok])
    for formula in cfg.regressions:
        y, X, ww, names = _regression_data(s, w, formula)
        fit = wls_regression(y, X, ww, names)
        for n, c in zip(names, fit.coef):
            out[f"{formula}:{n}"] = float(c)
    return out


def _regression_data(s: Dataset, w: np.ndarray, formula: str):
    lhs, rhs = parse_formula(formula)
    y = s.variable(lhs)
    cols = [np.ones(len(s))] + [s.variable(v) for v in rhs]
    X = np.column_stack(cols)
    ok = ~np.isnan(y) & ~np.isnan(X).any(axis=1)
    return y[ok], X[ok], w[ok], [INTERCEPT, *rhs]


def cmd_estimate(cfg: RunConfig) -> list[str]:
    if not cfg.outcomes and not cfg.regressions:
        raise BadSpec("nothing to estimate: give --outcomes and/or --regression")
    ds = _load(cfg)
    bcfg = cfg.blend_config()
    fit, ws = compute_weights(ds, bcfg)
    s, w = fit.blended, ws.weights
    records = []
    jk = None
    if cfg.variance == VarianceMethod.JACKKNIFE.value:

        def pipeline(d: Dataset) -> dict:
            f, wset = compute_weights(d, bcfg)
            return _estimands(f.blended, wset.weights, cfg)

        jk = jackknife(ds, pipeline, make_groups(ds, cfg.groups, cfg.seed))
        jk_se = jk.se
    for name in cfg.outcomes:
        y = s.variable(name)
        key = f"mean({name})"
        se = jk_se[key] if jk is not None else None
        rep = estimate_mean(y, w, key, cfg.alpha, se=se, method=VarianceMethod(cfg.variance))
        rec = rep.as_record()
        rec["p_value"] = two_sided_p(rep.estimate / rep.se) if rep.se > 0 else np.nan
        records.append(rec)
    for formula in cfg.regressions:
        y, X, ww, names = _regression_data(s, w, formula)
        fit_r = wls_regression(y, X, ww, names)
        for k, n in enumerate(names):
            key = f"{formula}:{n}"
            se = jk_se[key] if jk is not None else float(fit_r.se[k])
            rep = make_report(
                key, fit_r.coef[k], se, np.nan, VarianceMethod(cfg.variance), fit_r.n_used,
                int(len(s) - len(y)), cfg.alpha,
            )
            rec = rep.as_record()
            rec["p_value"] = two_sided_p(rep.estimate / se) if se > 0 else np.nan
            records.append(rec)
    out = _out_dir(cfg.out_dir)
    _write_table(pd.DataFrame(records), out / "estimates.csv")
    return ["estimates.csv"]


# ---------------------------------------------------------------------------
# adequacy


def cmd_adequacy(cfg: RunConfig) -> list[str]:
    if not cfg.outcomes:
        raise BadSpec("the adequacy test needs --outcomes")
    ds = _load(cfg)
    bcfg = cfg.blend_config()
    fit, ws = compute_weights(ds, bcfg)
    rows = []
    for name in cfg.outcomes:
        res = adequacy_test(fit.blended.variable(name), ws)
        rows.append({"outcome": name, **asdict(res)})
    out = _out_dir(cfg.out_dir)
    _write_table(pd.DataFrame(rows), out / "adequacy.csv")
    return ["adequacy.csv"]


# ---------------------------------------------------------------------------
# benchmarks


def cmd_benchmarks(cfg: RunConfig) -> list[str]:
    ds = _load(cfg)
    bcfg = cfg.blend_config()
    fit = fit_inclusion(ds, bcfg)
    target = benchmarks(fit, bcfg)
    out = _out_dir(cfg.out_dir)
    write_benchmarks(target, out / "benchmarks.csv")
    return ["benchmarks.csv"]


# ---------------------------------------------------------------------------
# simulate


def _custom_setting(path: str, tau, K: int, seed: int) -> SimSetting:
    with open(path, encoding="utf-8") as fh:
        spec = yaml.safe_load(fh)
    if not isinstance(spec, dict):
        raise BadSpec("a custom setting file must hold a mapping")
    allowed = {"label", "selection_coefficients", "auxiliary_set", "intercept", "tau", "tau_on"}
    extra = set(spec) - allowed
    if extra:
        raise BadSpec(f"unknown setting keys: {', '.join(sorted(extra))}")
    coefs = spec.get("selection_coefficients") or {}
    aux = tuple(spec.get("auxiliary_set") or ())
    tau_on = spec.get("tau_on")
    for name in [*coefs, *aux, *([tau_on] if tau_on else [])]:
        if name not in ROSTER:
            raise BadSpec(f"{name!r} is not a pseudo-population variable")
    if not aux:
        raise BadSpec("auxiliary_set must name at least one variable")
    kwargs = dict(
        label=str(spec.get("label", "custom")),
        selection_coefficients={k: float(v) for k, v in coefs.items()},
        auxiliary_set=aux,
        tau_on=tau_on,
        K=K,
        seed=seed,
    )
    if "intercept" in spec:
        kwargs["intercept"] = float(spec["intercept"])
    t = tau if tau is not None else spec.get("tau")
    if t is not None:
        kwargs["tau"] = float(t)
    return SimSetting(**kwargs)


def _plot_synthetic(df: pd.DataFrame, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    for m in ("prob_only", "linearization", "jackknife"):
        a.plot(df["r2"], df[f"coverage_{m}"], marker="o", label=m)
        b.plot(df["r2"], df[f"se_{m}"], marker="o", label=m)
    a.axhline(0.95, color="grey", lw=0.8, ls="--")
    a.set_xlabel("R^2")
    a.set_ylabel("coverage")
    b.set_xlabel("R^2")
    b.set_ylabel("mean standard error")
    b.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _plot_pseudo(table: pd.DataFrame, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.5))
    cols = list(table.columns)
    x = np.arange(len(cols))
    ax.bar(x - 0.2, table.loc["Bias"], 0.4, label="bias (%)")
    ax.bar(x + 0.2, table.loc["rMSE"], 0.4, label="rMSE (%)")
    ax.set_xticks(x, cols)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def cmd_simulate(args) -> tuple[list[str], dict, int]:
    out = _out_dir(args.out_dir)
    outputs = []
    if args.study == "synthetic":
        try:
            grid = [float(r) for r in args.r2.split(",")]
        except ValueError:
            raise BadSpec(f"bad --r2 list {args.r2!r}") from None
        if any(not 0 <= r < 1 for r in grid):
            raise BadSpec("every R^2 must lie in [0, 1)")
        df = run_synthetic_study(grid, K=args.k, seed=args.seed, G=args.groups, workers=args.workers)
        _write_table(df, out / "synthetic_coverage.csv")
        outputs.append("synthetic_coverage.csv")
        if args.plot:
            _plot_synthetic(df, out / "synthetic_coverage.png")
            outputs.append("synthetic_coverage.png")
        echo = {"study": "synthetic", "r2": grid, "K": args.k, "groups": args.groups}
    else:
        if args.study == "pseudo":
            if args.setting is None:
                raise BadSpec("simulate pseudo needs --setting 1..5")
            if args.setting not in range(1, 6):
                raise BadSpec(f"unknown setting {args.setting}")
            tau = 0.5 if args.tau is None else args.tau
            setting = pseudo_setting(args.setting, tau=tau, K=args.k, seed=args.seed)
        else:
            if not args.spec:
                raise BadSpec("simulate custom needs --spec FILE")
            setting = _custom_setting(args.spec, args.tau, args.k, args.seed)
        metrics = run_pseudo_study(
            setting, posthoc=args.posthoc, G=args.groups, pop_seed=args.pop_seed, workers=args.workers
        )
        table = metrics.table()
        name = f"pseudo_{setting.label}"
        _write_table(table, out / f"{name}.csv", index=True)
        outputs.append(f"{name}.csv")
        if args.plot:
            _plot_pseudo(table, out / f"{name}.png")
            outputs.append(f"{name}.png")
        echo = {
            "study": args.study,
            "label": setting.label,
            "conv_coefficients": setting.conv_coefficients,
            "auxiliary_set": list(setting.auxiliary_set),
            "intercept": setting.intercept,
            "tau": setting.tau,
            "tau_on": setting.tau_on,
            "K": args.k,
            "groups": args.groups,
            "posthoc": args.posthoc,
            "pop_seed": args.pop_seed,
            "benchmark": metrics.benchmark,
        }
    return outputs, echo, args.seed


# ---------------------------------------------------------------------------
# parser


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration; flags override its keys")
    p.add_argument("--data", help="comma-separated data file")
    p.add_argument("--aux", help="auxiliary variables for the propensity model (comma list)")
    p.add_argument("--outcomes", help="outcome variables (comma list)")
    p.add_argument("--response-vars", help="response-model variables (comma list)")
    p.add_argument("--calib-vars", help="calibration variables (comma list; default: --aux)")
    p.add_argument("--scheme", help="SPS, DPS, SC or DC")
    p.add_argument("--kappa", help="'auto' or a value in [0, 1]")
    p.add_argument("--trim-pct", type=float, help="trimming fraction at each end (default 0.01)")
    p.add_argument("--init", choices=["ps", "equal"], help="calibration starting weights")
    p.add_argument("--benchmark-source", choices=["ht", "file", "two-stage"])
    p.add_argument("--benchmarks", help="benchmark file with columns name,total,provenance")
    p.add_argument("--variance", help="LINEARIZATION or JACKKNIFE")
    p.add_argument("--groups", type=int, help="jackknife groups (default 40)")
    p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    p.add_argument("--seed", type=int, help="seed for jackknife group assignment")
    p.add_argument("--out-dir", help="output directory (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blendsurvey", description="Blend a probability sample with a convenience sample."
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (
        ("weights", "compute blending weights and diagnostics"),
        ("adequacy", "test adequacy of blending under disjoint weights"),
        ("benchmarks", "compute the calibration benchmark totals"),
    ):
        _add_run_options(sub.add_parser(name, help=help_))
    p = sub.add_parser("estimate", help="weighted means and regressions with standard errors")
    _add_run_options(p)
    p.add_argument(
        "--regression", action="append", dest="regressions",
        help="regression formula such as 'y ~ a + b' (repeatable)",
    )

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("study", choices=["synthetic", "pseudo", "custom"])
    p.add_argument("--setting", type=int, help="pseudo-population setting 1..5")
    p.add_argument("--spec", help="YAML file describing a custom selection setting")
    p.add_argument("--tau", type=float, help="selection coefficient on the outcome/latent variable")
    p.add_argument("--r2", default="0,0.25,0.5,0.75,0.9", help="R^2 grid for the synthetic study")
    p.add_argument("--k", type=int, default=1000, help="iterations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pop-seed", type=int, default=2018, help="seed of the pseudo-population")
    p.add_argument("--groups", type=int, default=40, help="jackknife groups")
    p.add_argument("--no-posthoc", dest="posthoc", action="store_false", help="skip the post hoc estimator")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--plot", action="store_true", help="also write PNG plots (needs matplotlib)")
    return parser


_RUN_KEYS = (
    "data", "aux", "outcomes", "response_vars", "calib_vars", "scheme", "kappa", "trim_pct",
    "init", "benchmark_source", "benchmarks", "variance", "groups", "alpha", "seed", "out_dir",
    "regressions",
)

_COMMANDS = {
    "weights": cmd_weights,
    "estimate": cmd_estimate,
    "adequacy": cmd_adequacy,
    "benchmarks": cmd_benchmarks,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            if args.k < 1:
                raise BadSpec("--k must be at least 1")
            outputs, echo, seed = cmd_simulate(args)
            _write_manifest(_out_dir(args.out_dir), "simulate", echo, seed, outputs)
        else:
            overrides = {k: getattr(args, k, None) for k in _RUN_KEYS}
            cfg = load_config(args.config, overrides)
            outputs = _COMMANDS[args.command](cfg)
            _write_manifest(_out_dir(cfg.out_dir), args.command, cfg.echo(), cfg.seed, outputs)
    except BlendError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
