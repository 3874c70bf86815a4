"""Two-sample data model: a probability sample S1 and a convenience sample S2.

Rows of the probability frame that did not respond may be carried along
(``respondent`` = 0) so the response model can be fitted; they never enter
the blended sample S = S1 u S2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    BadProbability,
    DuplicateId,
    EmptySample,
    MissingAuxiliary,
    MissingColumn,
    UnknownVariable,
)

ID_COL = "id"
SAMPLE_COL = "sample"
DSTAR_COL = "d_star"
RESPONDENT_COL = "respondent"
RHAT_COL = "r_hat"
RESERVED = (ID_COL, SAMPLE_COL, DSTAR_COL, RESPONDENT_COL, RHAT_COL)

INTERCEPT = "(Intercept)"


class Membership(str, Enum):
    PROB = "prob"
    CONV = "conv"


@dataclass(frozen=True)
class Unit:
    id: str
    membership: Membership
    x: Mapping[str, float]
    y: Mapping[str, float]
    d_star: float | None = None
    respondent: bool = True


@dataclass(frozen=True)
class Schema:
    """Column roles. Anything not reserved and not listed here is ignored."""

    auxiliary: tuple[str, ...]
    outcomes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "auxiliary", tuple(self.auxiliary))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column store over all rows (S1, S2 and S1 nonrespondents).

    ``x`` is (n, p) in ``schema.auxiliary`` order; ``y`` is (n, m) with NaN for
    missing outcomes; ``d_star`` and ``r_hat`` are NaN where absent.
    """

    ids: np.ndarray
    is_conv: np.ndarray
    x: np.ndarray
    y: np.ndarray
    d_star: np.ndarray
    schema: Schema
    respondent: np.ndarray = None
    r_hat: np.ndarray = None
    _aux_pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.ids)
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("ids", _frozen(np.asarray(self.ids, dtype=object)))
        set_("is_conv", _frozen(np.asarray(self.is_conv, dtype=bool)))
        set_("x", _frozen(np.asarray(self.x, dtype=float).reshape(n, len(self.schema.auxiliary))))
        set_("y", _frozen(np.asarray(self.y, dtype=float).reshape(n, len(self.schema.outcomes))))
        set_("d_star", _frozen(np.asarray(self.d_star, dtype=float)))
        resp = np.ones(n, bool) if self.respondent is None else np.asarray(self.respondent, bool)
        set_("respondent", _frozen(resp | self.is_conv))
        rh = np.full(n, np.nan) if self.r_hat is None else np.asarray(self.r_hat, float)
        set_("r_hat", _frozen(rh))
        set_("_aux_pos", {name: j for j, name in enumerate(self.schema.auxiliary)})
        self._validate()

    def _validate(self):
        if len(set(self.ids)) != len(self.ids):
            seen, dup = set(), None
            for i in self.ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise DuplicateId(f"duplicate id {dup!r}")
        if np.isnan(self.x).any():
            row = int(np.where(np.isnan(self.x).any(axis=1))[0][0])
            raise MissingAuxiliary(f"row {self.ids[row]!r} has missing auxiliary values")
        present = ~np.isnan(self.d_star)
        bad = present & ((self.d_star <= 0) | (self.d_star > 1))
        if bad.any():
            i = int(np.where(bad)[0][0])
            raise BadProbability(f"d_star={self.d_star[i]} for id {self.ids[i]!r} not in (0, 1]")
        missing = ~self.is_conv & ~present
        if missing.any():
            i = int(np.where(missing)[0][0])
            raise BadProbability(f"probability-sample unit {self.ids[i]!r} lacks d_star")
        rh = self.r_hat[~np.isnan(self.r_hat)]
        if ((rh <= 0) | (rh > 1)).any():
            raise BadProbability("r_hat values must lie in (0, 1]")

    # -- sizes and masks ------------------------------------------------
    def __len__(self) -> int:
        return len(self.ids)

    @property
    def in_s1(self) -> np.ndarray:
        return ~self.is_conv & self.respondent

    @property
    def in_s2(self) -> np.ndarray:
        return self.is_conv

    @property
    def n1(self) -> int:
        return int(self.in_s1.sum())

    @property
    def n2(self) -> int:
        return int(self.is_conv.sum())

    @property
    def has_nonrespondents(self) -> bool:
        return bool((~self.respondent).any())

    def require_both(self):
        if self.n1 == 0 or self.n2 == 0:
            raise EmptySample(f"need both samples nonempty (n1={self.n1}, n2={self.n2})")

    # -- views -----------------------------------------------------------
    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            ids=self.ids[index],
            is_conv=self.is_conv[index],
            x=self.x[index],
            y=self.y[index],
            d_star=self.d_star[index],
            schema=self.schema,
            respondent=self.respondent[index],
            r_hat=self.r_hat[index],
        )

    def blended(self) -> "Dataset":
        """The analysis sample S: respondents of S1 plus all of S2."""
        if not self.has_nonrespondents:
            return self
        return self.subset(np.flatnonzero(self.respondent))

    def aux(self, name: str) -> np.ndarray:
        try:
            return self.x[:, self._aux_pos[name]]
        except KeyError:
            raise UnknownVariable(f"unknown auxiliary variable {name!r}") from None

    def outcome(self, name: str) -> np.ndarray:
        try:
            return self.y[:, self.schema.outcomes.index(name)]
        except ValueError:
            raise UnknownVariable(f"unknown outcome {name!r}") from None

    def variable(self, name: str) -> np.ndarray:
        """Auxiliary or outcome column by name."""
        if name in self._aux_pos:
            return self.aux(name)
        return self.outcome(name)

    @property
    def units(self) -> list[Unit]:
        out = []
        for i in range(len(self)):
            ds = None if np.isnan(self.d_star[i]) else float(self.d_star[i])
            out.append(
                Unit(
                    id=str(self.ids[i]),
                    membership=Membership.CONV if self.is_conv[i] else Membership.PROB,
                    x=dict(zip(self.schema.auxiliary, self.x[i].tolist())),
                    y=dict(zip(self.schema.outcomes, self.y[i].tolist())),
                    d_star=ds,
                    respondent=bool(self.respondent[i]),
                )
            )
        return out

    def equals(self, other: "Dataset") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.is_conv, other.is_conv)
            and np.array_equal(self.respondent, other.respondent)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y, equal_nan=True)
            and np.array_equal(self.d_star, other.d_star, equal_nan=True)
            and np.array_equal(self.r_hat, other.r_hat, equal_nan=True)
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(
            {
                ID_COL: self.ids,
                SAMPLE_COL: np.where(self.is_conv, Membership.CONV.value, Membership.PROB.value),
                DSTAR_COL: self.d_star,
            }
        )
        if self.has_nonrespondents:
            df[RESPONDENT_COL] = self.respondent.astype(int)
        if not np.isnan(self.r_hat).all():
            df[RHAT_COL] = self.r_hat
        for j, name in enumerate(self.schema.auxiliary):
            df[name] = self.x[:, j]
        for j, name in enumerate(self.schema.outcomes):
            df[name] = self.y[:, j]
        return df


def from_frame(df: pd.DataFrame, schema: Schema) -> Dataset:
    for col in (ID_COL, SAMPLE_COL, *schema.auxiliary, *schema.outcomes):
        if col not in df.columns:
            raise MissingColumn(f"column {col!r} not found")
    if DSTAR_COL not in df.columns:
        raise MissingColumn(f"column {DSTAR_COL!r} not found")
    labels = df[SAMPLE_COL].astype(str).str.strip().str.lower()
    bad = ~labels.isin([m.value for m in Membership])
    if bad.any():
        raise MissingColumn(
            f"{SAMPLE_COL!r} must hold 'prob' or 'conv'; got {df[SAMPLE_COL][bad].iloc[0]!r}"
        )
    n = len(df)
    respondent = (
        df[RESPONDENT_COL].fillna(1).to_numpy(float) != 0 if RESPONDENT_COL in df else None
    )
    ds = Dataset(
        ids=df[ID_COL].astype(str).to_numpy(),
        is_conv=(labels == Membership.CONV.value).to_numpy(),
        x=df[list(schema.auxiliary)].to_numpy(float) if schema.auxiliary else np.empty((n, 0)),
        y=df[list(schema.outcomes)].to_numpy(float) if schema.outcomes else np.empty((n, 0)),
        d_star=pd.to_numeric(df[DSTAR_COL], errors="coerce").to_numpy(float),
        schema=schema,
        respondent=respondent,
        r_hat=df[RHAT_COL].to_numpy(float) if RHAT_COL in df else None,
    )
    ds.require_both()
    return ds


def load_dataset(path: str | Path, schema: Schema) -> Dataset:
    """Read a comma-separated file with a header row into a validated Dataset."""
    df = pd.read_csv(path, dtype={ID_COL: str}, encoding="utf-8", float_precision="round_trip")
    return from_frame(df, schema)


def write_dataset(ds: Dataset, path: str | Path) -> None:
    # repr-precision floats so a reload is bit-identical
    ds.to_frame().to_csv(path, index=False, float_format="%.17g")


def design_matrix(
    ds: Dataset, vars: Sequence[str], add_intercept: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Columns for ``vars`` in the given order, intercept first when requested.

    Returns the matrix and the row -> unit-index map (identity over ``ds``).
    """
    cols = [ds.aux(v) for v in vars]
    if add_intercept:
        cols.insert(0, np.ones(len(ds)))
    X = np.column_stack(cols) if cols else np.empty((len(ds), 0))
    return X, np.arange(len(ds))


def column_names(vars: Sequence[str], add_intercept: bool = True) -> list[str]:
    return ([INTERCEPT] if add_intercept else []) + list(vars)
