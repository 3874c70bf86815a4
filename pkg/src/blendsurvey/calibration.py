"""Generalized raking under the truncated linear distance, and benchmark totals.

The calibrated weights are v_i = w_i F(x_i' xi) with F(u) = clip(1 + u, low, high),
which is the inverse derivative of G(x) = (x - 1)^2 / 2 restricted to the
bounds. The multipliers xi minimise the convex dual

    Phi(xi) = sum_i w_i H(x_i' xi) - xi' t,    H' = F,

whose gradient is exactly the calibration residual. Damped Newton steps on
Phi use only the units strictly inside the bounds in the Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .blending import AUTO, Scheme, WeightSet, mix
from .dataset import INTERCEPT, Dataset
from .errors import RakingNonconvergence, RankDeficient, UnknownVariable
from .numerics import check_rank
from .propensity import InclusionProbs

TOL = 1e-8
MAX_ITER = 50
MAX_HALVINGS = 20


class Provenance(str, Enum):
    KNOWN = "KNOWN"
    HT_ESTIMATED = "HT_ESTIMATED"
    TWO_STAGE = "TWO_STAGE"


@dataclass(frozen=True)
class BenchmarkVector:
    names: tuple
    totals: np.ndarray
    provenance: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "totals", np.asarray(self.totals, float).reshape(len(self.names)))
        prov = self.provenance
        if prov is None:
            prov = (Provenance.KNOWN,) * len(self.names)
        object.__setattr__(self, "provenance", tuple(Provenance(p) for p in prov))
        if not np.all(np.isfinite(self.totals)):
            raise ValueError("benchmark totals must be finite")

    def __getitem__(self, name: str) -> float:
        return float(self.totals[self.names.index(name)])

    def select(self, names: Sequence[str]) -> "BenchmarkVector":
        idx = [self.names.index(n) for n in names]
        return BenchmarkVector(
            [self.names[i] for i in idx], self.totals[idx], [self.provenance[i] for i in idx]
        )

    @property
    def population_size(self) -> float | None:
        return self[INTERCEPT] if INTERCEPT in self.names else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"name": self.names, "total": self.totals, "provenance": [p.value for p in self.provenance]}
        )


def write_benchmarks(bm: BenchmarkVector, path: str | Path) -> None:
    bm.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_benchmarks(path: str | Path) -> BenchmarkVector:
    df = pd.read_csv(path, float_precision="round_trip")
    prov = df["provenance"] if "provenance" in df else None
    return BenchmarkVector(df["name"].astype(str).tolist(), df["total"].to_numpy(float), prov)


def calibration_matrix(ds: Dataset, names: Sequence[str]) -> np.ndarray:
    cols = []
    for name in names:
        if name == INTERCEPT:
            cols.append(np.ones(len(ds)))
        else:
            cols.append(ds.aux(name))
    return np.column_stack(cols) if cols else np.empty((len(ds), 0))


@dataclass(frozen=True)
class RakingSolution:
    weights: np.ndarray
    multipliers: np.ndarray
    iterations: int
    residual: float
    converged: bool


def _F(u, low, high):
    return np.clip(1.0 + u, low, high)


def _H(u, low, high):
    s = 1.0 + u
    out = 0.5 * s**2
    below = s < low
    out = np.where(below, low * s - 0.5 * low**2, out)
    if np.isfinite(high):
        out = np.where(s > high, high * s - 0.5 * high**2, out)
    return out


def rake(
    initial,
    X,
    target,
    bounds: tuple[float, float] = (0.0, np.inf),
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    check: bool = True,
) -> RakingSolution:
    """Calibrate ``initial`` weights so that X' v = target.

    ``target`` is a BenchmarkVector or a plain vector matching X's columns.
    ``bounds`` restrict the ratio v / initial. Returns ``converged=False``
    with the best iterate when the residual does not reach ``tol``.
    """
    w = np.asarray(initial, float)
    X = np.asarray(X, float)
    t = target.totals if isinstance(target, BenchmarkVector) else np.asarray(target, float)
    low, high = float(bounds[0]), float(bounds[1])
    if X.shape[1] != t.size:
        raise ValueError(f"target has {t.size} entries for {X.shape[1]} columns")
    if check:
        check_rank(X * np.sqrt(w)[:, None])
    scale = np.maximum(1.0, np.abs(t))

    def state(xi):
        u = X @ xi
        v = w * _F(u, low, high)
        grad = X.T @ v - t
        phi = float(np.sum(w * _H(u, low, high)) - xi @ t)
        return u, v, grad, phi

    xi = np.zeros(X.shape[1])
    u, v, grad, phi = state(xi)
    res = float(np.max(np.abs(grad) / scale, initial=0.0))
    best = (res, xi, v)
    it = 0
    while res > tol and it < max_iter:
        it += 1
        s = 1.0 + u
        active = (s > low) & (s < high)
        Xa = X[active]
        J = (Xa * w[active, None]).T @ Xa
        try:
            step = np.linalg.solve(J, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = xi - lam * step
            u_c, v_c, g_c, phi_c = state(cand)
            if phi_c <= phi + 1e-14 * max(1.0, abs(phi)):
                break
            lam *= 0.5
        else:
            break
        xi, u, v, grad, phi = cand, u_c, v_c, g_c, phi_c
        res = float(np.max(np.abs(grad) / scale, initial=0.0))
        if res < best[0]:
            best = (res, xi, v)
    res, xi, v = best
    return RakingSolution(
        weights=v, multipliers=xi, iterations=it, residual=res, converged=res <= tol
    )


def _require(sol: RakingSolution, what: str) -> RakingSolution:
    if not sol.converged:
        raise RakingNonconvergence(
            f"{what}: calibration did not converge (residual {sol.residual:.3e} after "
            f"{sol.iterations} iterations); the constraints may be infeasible"
        )
    return sol


def estimate_benchmarks(ds: Dataset, probs: InclusionProbs, vars: Sequence[str]) -> BenchmarkVector:
    """Horvitz-Thompson totals from S1: sum over S1 of x / d."""
    s1 = ds.in_s1
    X = calibration_matrix(ds, vars)
    totals = X[s1].T @ (1.0 / probs.d_hat[s1])
    return BenchmarkVector(vars, totals, [Provenance.HT_ESTIMATED] * len(vars))


def two_stage_benchmarks(
    ds: Dataset,
    known: BenchmarkVector,
    probs: InclusionProbs,
    vars: Sequence[str],
    bounds: tuple[float, float] = (0.0, np.inf),
) -> BenchmarkVector:
    """Rake S1 to the known totals, then total the full variable list with those weights."""
    s1 = ds.in_s1
    for name in known.names:
        if name not in vars:
            raise UnknownVariable(f"known benchmark {name!r} is not in the auxiliary list")
    X1 = calibration_matrix(ds, known.names)[s1]
    sol = _require(rake(1.0 / probs.d_hat[s1], X1, known.totals, bounds), "two-stage benchmarks")
    totals = calibration_matrix(ds, vars)[s1].T @ sol.weights
    for j, name in enumerate(vars):
        if name in known.names:
            totals[j] = known[name]
    prov = [Provenance.KNOWN if n in known.names else Provenance.TWO_STAGE for n in vars]
    return BenchmarkVector(vars, totals, prov)


def _equal_init(n: int, target: BenchmarkVector) -> np.ndarray:
    N = target.population_size
    return np.full(n, (N if N is not None else n) / n)


def sc_weights(
    ds: Dataset,
    probs: InclusionProbs | None,
    target: BenchmarkVector,
    init: str = "ps",
    bounds: tuple[float, float] = (0.0, np.inf),
) -> WeightSet:
    """Simultaneous calibration of the pooled sample.

    ``init="ps"`` starts from the simultaneous propensity weights 1/p;
    ``init="equal"`` (or no probabilities) starts from N/n for every unit.
    """
    if init == "ps" and probs is not None:
        w0 = 1.0 / probs.p_hat
    else:
        w0 = _equal_init(len(ds), target)
    X = calibration_matrix(ds, target.names)
    sol = _require(rake(w0, X, target, bounds), "simultaneous calibration")
    return WeightSet(Scheme.SC, sol.weights, ds.is_conv.copy())


def dc_weights(
    ds: Dataset,
    probs: InclusionProbs | None,
    target: BenchmarkVector,
    kappa=AUTO,
    init: str = "ps",
    bounds: tuple[float, float] = (0.0, np.inf),
) -> WeightSet:
    """Disjoint calibration: rake S1 and S2 separately to the same totals, then mix.

    A sample whose own design matrix is rank deficient cannot meet the totals
    in general; that is reported as nonconvergence of that sample's rake.
    """
    conv = ds.is_conv
    X = calibration_matrix(ds, target.names)
    parts = []
    for label, mask in (("probability sample", ~conv), ("convenience sample", conv)):
        if init == "ps" and probs is not None:
            w0 = 1.0 / (probs.q_hat[mask] if label.startswith("conv") else probs.d_hat[mask])
        else:
            w0 = _equal_init(int(mask.sum()), target)
        try:
            sol = rake(w0, X[mask], target, bounds)
        except RankDeficient as exc:
            raise RakingNonconvergence(f"disjoint calibration, {label}: {exc}") from exc
        parts.append(_require(sol, f"disjoint calibration, {label}").weights)
    w, k = mix(parts[0], parts[1], conv, kappa)
    return WeightSet(Scheme.DC, w, conv.copy(), kappa=k)
