"""Propensity-score blending weights, the Kish-optimal mixing constant, and trimming."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ZeroConvenienceProb
from .propensity import InclusionProbs

AUTO = "auto"


class Scheme(str, Enum):
    SPS = "SPS"
    DPS = "DPS"
    SC = "SC"
    DC = "DC"
    DESIGN_ONLY = "DESIGN_ONLY"

    @property
    def disjoint(self) -> bool:
        return self in (Scheme.DPS, Scheme.DC)


@dataclass(frozen=True)
class WeightSet:
    scheme: Scheme
    weights: np.ndarray
    is_conv: np.ndarray
    kappa: float | None = None
    trimmed: bool = False
    trim_bounds: tuple[float, float] | None = None
    trim_mask: np.ndarray | None = None

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def part(self, conv: bool) -> np.ndarray:
        return self.weights[self.is_conv == conv]


def kish_deff(weights) -> float:
    """n * sum(w^2) / (sum w)^2."""
    w = np.asarray(weights, float)
    return len(w) * float(np.sum(w**2)) / float(np.sum(w)) ** 2


def kish_kappa(d_inv_s1, q_inv_s2) -> float:
    """Mixing constant minimising the Kish design effect of the concatenated weights.

    The same formula serves disjoint calibration with the per-sample calibrated
    weights in place of 1/d and 1/q.
    """
    a = np.asarray(d_inv_s1, float)
    b = np.asarray(q_inv_s2, float)
    if a.size == 0 or b.size == 0:
        raise ValueError("kish_kappa needs both weight vectors nonempty")
    num = a.sum() * np.sum(b**2)
    return float(num / (num + np.sum(a**2) * b.sum()))


def sps_weights(probs: InclusionProbs) -> WeightSet:
    """Simultaneous propensity-score weights 1/p over the pooled sample."""
    return WeightSet(Scheme.SPS, 1.0 / probs.p_hat, probs.is_conv)


def mix(w1: np.ndarray, w2: np.ndarray, is_conv: np.ndarray, kappa) -> tuple[np.ndarray, float]:
    """Scale S1 weights by kappa and S2 weights by 1 - kappa, in unit order."""
    if kappa == AUTO or kappa is None:
        kappa = kish_kappa(w1, w2)
    kappa = float(kappa)
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    w = np.empty(len(is_conv))
    w[~is_conv] = kappa * w1
    w[is_conv] = (1.0 - kappa) * w2
    return w, kappa


def dps_weights(probs: InclusionProbs, kappa=AUTO) -> WeightSet:
    """Disjoint propensity-score weights: kappa/d on S1, (1 - kappa)/q on S2."""
    conv = probs.is_conv
    q2 = probs.q_hat[conv]
    if np.any(q2 <= 0):
        raise ZeroConvenienceProb("a convenience unit has q_hat = 0 (positivity violated)")
    w, k = mix(1.0 / probs.d_hat[~conv], 1.0 / q2, conv, kappa)
    return WeightSet(Scheme.DPS, w, conv, kappa=k)


def design_only_weights(probs: InclusionProbs) -> WeightSet:
    """1/d on S1 and zero on S2: the probability sample by itself."""
    w = np.where(probs.is_conv, 0.0, 1.0 / probs.d_hat)
    return WeightSet(Scheme.DESIGN_ONLY, w, probs.is_conv)


def trim_weights(ws: WeightSet, pct: float) -> WeightSet:
    """Pull weights outside the [pct, 1 - pct] quantiles onto those quantiles.

    Untouched weights are rescaled by one common factor so the total is
    preserved. Quantiles use linear interpolation between order statistics,
    pooled over both samples; zero weights (kappa at a boundary) are left out.
    """
    if not 0.0 <= pct < 0.5:
        raise ValueError("pct must lie in [0, 0.5)")
    if pct == 0:
        return ws
    w = ws.weights.copy()
    live = w > 0
    lo, hi = np.quantile(w[live], [pct, 1.0 - pct])
    low = live & (w < lo)
    high = live & (w > hi)
    inner = live & ~low & ~high
    total = w.sum()
    w[low] = lo
    w[high] = hi
    if inner.any():
        w[inner] *= (total - w[low | high].sum()) / w[inner].sum()
    else:
        w *= total / w.sum()
    return replace(
        ws, weights=w, trimmed=True, trim_bounds=(float(lo), float(hi)), trim_mask=low | high
    )


def write_weights(ws: WeightSet, ids, path: str | Path) -> None:
    pd.DataFrame(
        {
            "id": ids,
            "scheme": ws.scheme.value,
            "weight": ws.weights,
            "trimmed": (
                ws.trim_mask.astype(int) if ws.trim_mask is not None else np.zeros(len(ids), int)
            ),
        }
    ).to_csv(path, index=False, float_format="%.17g")


def read_weights(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
