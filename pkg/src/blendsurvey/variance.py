"""Design-based variance: Taylor linearization and the delete-a-group jackknife.

Linearization uses the with-replacement single-stage approximation with an
n/(n-1) correction and no finite-population correction. The jackknife
re-runs a full estimation pipeline (weights included) with one group deleted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .dataset import Dataset
from .errors import BlendError, NotEnoughUnits, ReplicateFailure, TooFewUnits
from .numerics import check_rank


def linearized_se_mean(y, w) -> float:
    """Standard error of the ratio mean sum(w y) / sum(w)."""
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    n = int(np.count_nonzero(w))
    if n < 2:
        raise NotEnoughUnits("linearized standard error needs at least two weighted units")
    mu = np.sum(w * y) / np.sum(w)
    z = w * (y - mu)
    return float(np.sqrt(np.sum(z**2) * n / (n - 1)) / np.sum(w))


def wls_fit(y, X, w) -> np.ndarray:
    X = np.asarray(X, float)
    Xw = X * np.asarray(w, float)[:, None]
    return np.linalg.solve(Xw.T @ X, Xw.T @ np.asarray(y, float))


def linearized_cov_wls(y, X, w, coef: np.ndarray | None = None) -> np.ndarray:
    """Sandwich covariance of WLS coefficients from the score contributions w x e."""
    y = np.asarray(y, float)
    X = np.asarray(X, float)
    w = np.asarray(w, float)
    live = w > 0
    n = int(live.sum())
    if n < 2:
        raise NotEnoughUnits("need at least two weighted units")
    check_rank(X[live] * np.sqrt(w[live])[:, None])
    if coef is None:
        coef = wls_fit(y, X, w)
    e = y - X @ coef
    scores = (X * (w * e)[:, None])[live]
    scores = scores - scores.mean(axis=0)
    meat = scores.T @ scores * n / (n - 1)
    bread = np.linalg.inv((X * w[:, None]).T @ X)
    return bread @ meat @ bread


@dataclass(frozen=True)
class ReplicateGroups:
    G: int
    assignment: np.ndarray
    seed: int | None

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == g)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.G + 1)[1:]


def make_groups(ds: Dataset | int, G: int = 40, seed: int | None = 0) -> ReplicateGroups:
    """Shuffle the rows (seeded) and deal them into groups 1..G in turn."""
    n = ds if isinstance(ds, int) else len(ds)
    if G < 2 or n < G:
        raise TooFewUnits(f"cannot form {G} nonempty groups from {n} units")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[perm] = np.arange(n) % G + 1
    return ReplicateGroups(G, assignment, seed)


@dataclass(frozen=True)
class JackknifeResult:
    names: tuple
    estimate: np.ndarray
    replicates: np.ndarray  # (G, k)

    @property
    def covariance(self) -> np.ndarray:
        G = self.replicates.shape[0]
        dev = self.replicates - self.replicates.mean(axis=0)
        return (G - 1) / G * dev.T @ dev

    @property
    def se(self) -> dict:
        return dict(zip(self.names, np.sqrt(np.diag(self.covariance)).tolist()))

    def cov(self, a: str, b: str) -> float:
        i, j = self.names.index(a), self.names.index(b)
        return float(self.covariance[i, j])


Pipeline = Callable[[Dataset], Mapping[str, float]]


def jackknife(ds: Dataset, pipeline: Pipeline, groups: ReplicateGroups) -> JackknifeResult:
    """Delete-a-group jackknife; ``pipeline`` must recompute weights from raw rows.

    A failing replicate aborts the run with ReplicateFailure naming the group.
    """
    full = pipeline(ds)
    names = tuple(full)
    reps = np.empty((groups.G, len(names)))
    for g in range(1, groups.G + 1):
        keep = np.flatnonzero(groups.assignment != g)
        try:
            out = pipeline(ds.subset(keep))
        except BlendError as exc:
            raise ReplicateFailure(g, exc) from exc
        except np.linalg.LinAlgError as exc:
            raise ReplicateFailure(g, exc) from exc
        reps[g - 1] = [out[k] for k in names]
    return JackknifeResult(names, np.array([full[k] for k in names]), reps)
