"""Run configuration: YAML file plus command-line overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .blending import AUTO, Scheme
from .calibration import read_benchmarks
from .dataset import Schema
from .errors import BadSpec
from .estimation import VarianceMethod
from .workflow import BlendConfig

BENCHMARK_SOURCES = ("ht", "file", "two-stage")
LIST_KEYS = ("aux", "outcomes", "response_vars", "calib_vars")


@dataclass
class RunConfig:
    data: str | None = None
    aux: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    response_vars: list | None = None
    calib_vars: list | None = None
    regressions: list = field(default_factory=list)
    scheme: str = "SPS"
    kappa: object = AUTO
    trim_pct: float = 0.01
    init: str = "ps"
    bounds: list = field(default_factory=lambda: [0.0, None])
    variance: str = "LINEARIZATION"
    groups: int = 40
    alpha: float = 0.05
    seed: int = 0
    benchmark_source: str = "ht"
    benchmarks: str | None = None
    out_dir: str = "."
    workers: int = 1

    def validate(self) -> "RunConfig":
        try:
            Scheme(str(self.scheme).upper())
            VarianceMethod(str(self.variance).upper())
        except ValueError as exc:
            raise BadSpec(str(exc)) from exc
        self.scheme = str(self.scheme).upper()
        self.variance = str(self.variance).upper()
        if self.kappa != AUTO:
            try:
                self.kappa = float(self.kappa)
            except (TypeError, ValueError):
                raise BadSpec(f"kappa must be 'auto' or a number, got {self.kappa!r}") from None
            if not 0 <= self.kappa <= 1:
                raise BadSpec("kappa must lie in [0, 1]")
        if not 0 <= self.trim_pct < 0.5:
            raise BadSpec("trim_pct must lie in [0, 0.5)")
        if self.benchmark_source not in BENCHMARK_SOURCES:
            raise BadSpec(f"benchmark_source must be one of {BENCHMARK_SOURCES}")
        if self.benchmark_source != "ht" and not self.benchmarks:
            raise BadSpec(f"benchmark_source={self.benchmark_source!r} needs a benchmarks file")
        if self.variance == "JACKKNIFE" and self.groups < 2:
            raise BadSpec("the jackknife needs at least 2 groups")
        if self.init not in ("ps", "equal"):
            raise BadSpec("init must be 'ps' or 'equal'")
        if not 0 < self.alpha < 1:
            raise BadSpec("alpha must lie in (0, 1)")
        return self

    def schema(self) -> Schema:
        aux = list(dict.fromkeys([*self.aux, *(self.response_vars or []), *(self.calib_vars or [])]))
        outcomes = list(self.outcomes)
        for formula in self.regressions:
            lhs, rhs = parse_formula(formula)
            for name in [lhs, *rhs]:
                if name not in aux and name not in outcomes:
                    outcomes.append(name)
        return Schema(tuple(aux), tuple(outcomes))

    def blend_config(self) -> BlendConfig:
        known = read_benchmarks(self.benchmarks) if self.benchmarks else None
        low, high = self.bounds
        return BlendConfig(
            aux_vars=tuple(self.aux),
            response_vars=tuple(self.response_vars) if self.response_vars else None,
            calib_vars=tuple(self.calib_vars) if self.calib_vars is not None else None,
            scheme=Scheme(self.scheme),
            kappa=self.kappa,
            trim_pct=float(self.trim_pct),
            init=self.init,
            benchmark_source=self.benchmark_source,
            known_benchmarks=known,
            bounds=(float(low), np.inf if high is None else float(high)),
        )

    def echo(self) -> dict:
        return asdict(self)


def _as_list(value):
    if value is None:
        return None
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return list(value)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the YAML file, then non-None ``overrides``."""
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise BadSpec("config file must hold a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise BadSpec(f"unknown config keys: {', '.join(unknown)}")
    for key in LIST_KEYS:
        if key in raw:
            raw[key] = _as_list(raw[key])
    if isinstance(raw.get("regressions"), str):
        raw["regressions"] = [raw["regressions"]]
    return RunConfig(**raw).validate()


def parse_formula(formula: str) -> tuple[str, list[str]]:
    """'y ~ a + b' -> ('y', ['a', 'b']); 'y ~ 1' -> ('y', [])."""
    if formula.count("~") != 1:
        raise BadSpec(f"formula {formula!r} needs exactly one '~'")
    lhs, rhs = (s.strip() for s in formula.split("~"))
    terms = [t.strip() for t in rhs.split("+") if t.strip()]
    if not lhs or not terms:
        raise BadSpec(f"formula {formula!r} is incomplete")
    return lhs, [t for t in terms if t != "1"]
