"""COMPAS-style CSV loading, cohort filters, 20-day binning and feature tables.

Column names are resolved through a mapping (logical name -> CSV column)
shipped as ``data/compas_columns.json``; pass ``columns=`` to override any
entry. When the CSV has no days-before-reoffending column the value is
derived as re-offense date minus offense date, and only for rows with
``two_year_recid == 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np
import pandas as pd

from .lds import Panel
from .postprocess import PostFeatures

__all__ = [
    "AA",
    "CAUCASIAN",
    "IngestError",
    "LoadResult",
    "column_map",
    "read_compas",
    "load_cohort_119",
    "load_sample_1005",
    "binify",
    "binify_with_stats",
    "post_features",
    "split_train_test",
    "fixture_path",
]

AA = "African-American"
CAUCASIAN = "Caucasian"
RACES = (AA, CAUCASIAN)

REQUIRED = (
    "id", "race", "sex", "age", "charge_degree", "recharge_degree", "decile_score",
    "two_year_recid", "priors_count", "juv_fel_count", "juv_misd_count",
)
INT_FIELDS = ("age", "decile_score", "two_year_recid", "priors_count", "juv_fel_count", "juv_misd_count")


class IngestError(ValueError):
    pass


def column_map(overrides: Mapping[str, str] | None = None) -> dict[str, str]:
    text = resources.files("fairlds").joinpath("data/compas_columns.json").read_text(encoding="utf-8")
    mapping = json.loads(text)
    if overrides:
        unknown = set(overrides) - set(mapping)
        if unknown:
            raise IngestError(f"unknown logical columns {sorted(unknown)}")
        mapping.update(overrides)
    return mapping


def fixture_path():
    """Bundled 30-row ProPublica-style fixture."""
    return resources.files("fairlds").joinpath("data/compas_fixture.csv")


@dataclass
class LoadResult:
    rows: pd.DataFrame
    dropped: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def subsamples(self) -> dict[str, pd.DataFrame]:
        if "subsample" not in self.rows.columns:
            return {}
        return {k: g for k, g in self.rows.groupby("subsample", sort=True)}


def _degree(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return str(value).strip().strip("()").strip().upper()


def _empty(columns) -> pd.DataFrame:
    return pd.DataFrame({c: pd.Series(dtype=object) for c in columns})


def read_compas(csv, columns: Mapping[str, str] | None = None, nrows: int | None = None) -> LoadResult:
    """Read and normalise a ProPublica-style CSV.

    Output columns are the logical names plus ``days_before_reoffending``
    (float, NaN when absent). Rows whose decile score lies outside 1..10 are
    dropped and counted under ``decile_score``.
    """
    cmap = column_map(columns)
    out_cols = list(REQUIRED) + ["days_before_reoffending"]
    try:
        raw = pd.read_csv(csv, nrows=nrows, dtype=str, keep_default_na=True)
    except pd.errors.EmptyDataError:
        return LoadResult(_empty(out_cols), {"decile_score": 0})
    missing = [cmap[k] for k in REQUIRED if cmap[k] not in raw.columns]
    if missing:
        raise IngestError(f"CSV lacks required columns {missing}")

    df = pd.DataFrame({k: raw[cmap[k]] for k in REQUIRED})
    df["race"] = df["race"].fillna("").str.strip()
    df["sex"] = df["sex"].fillna("").str.strip()
    df["id"] = df["id"].fillna("").str.strip()
    df["charge_degree"] = df["charge_degree"].map(_degree)
    df["recharge_degree"] = df["recharge_degree"].map(_degree)
    for col in INT_FIELDS:
        num = pd.to_numeric(df[col], errors="coerce")
        if num.isna().any():
            bad = df.loc[num.isna(), "id"].tolist()[:5]
            raise IngestError(f"column {cmap[col]!r} has non-numeric values (ids {bad})")
        df[col] = num.astype(int)
    if not df["two_year_recid"].isin((0, 1)).all():
        raise IngestError(f"column {cmap['two_year_recid']!r} must be 0/1")

    days_col = cmap["days_before_reoffending"]
    if days_col in raw.columns:
        days = pd.to_numeric(raw[days_col], errors="coerce")
    elif cmap["offense_date"] in raw.columns and cmap["reoffense_date"] in raw.columns:
        c = pd.to_datetime(raw[cmap["offense_date"]], errors="coerce")
        r = pd.to_datetime(raw[cmap["reoffense_date"]], errors="coerce")
        days = (r - c).dt.days.astype(float)
        days[df["two_year_recid"] != 1] = np.nan
    else:
        days = pd.Series(np.nan, index=df.index)
    df["days_before_reoffending"] = days.astype(float)

    ok = df["decile_score"].between(1, 10)
    return LoadResult(df.loc[ok].reset_index(drop=True), {"decile_score": int((~ok).sum())})


def _cohort_mask(df: pd.DataFrame) -> pd.Series:
    return (
        df["race"].isin(RACES)
        & (df["sex"] == "Male")
        & df["age"].between(25, 45)
        & (df["priors_count"] < 2)
        & (df["charge_degree"] == "M")
        & df["recharge_degree"].isin(("M1", "M2"))
        & (df["two_year_recid"] == 1)
    )


def load_cohort_119(csv, columns: Mapping[str, str] | None = None) -> LoadResult:
    """Recidivist cohort; ``subsample`` is ``race/recharge degree``.

    Rows breaking "days present iff two_year_recid = 1" are dropped and
    counted under ``days_missing``.
    """
    res = read_compas(csv, columns)
    df = res.rows
    valid = df["days_before_reoffending"].notna() == (df["two_year_recid"] == 1)
    dropped = dict(res.dropped, days_missing=int((~valid).sum()))
    df = df.loc[valid]
    df = df.loc[_cohort_mask(df)].copy()
    df["subsample"] = df["race"] + "/" + df["recharge_degree"]
    return LoadResult(df.reset_index(drop=True), dropped)


def load_sample_1005(csv, columns: Mapping[str, str] | None = None, head: int = 1200) -> LoadResult:
    """First ``head`` CSV rows restricted to African-American and Caucasian defendants."""
    res = read_compas(csv, columns, nrows=head)
    df = res.rows
    return LoadResult(df.loc[df["race"].isin(RACES)].reset_index(drop=True), res.dropped)


def _rows_frame(rows) -> pd.DataFrame:
    return rows.rows if isinstance(rows, LoadResult) else rows


def binify_with_stats(rows, period_days: int = 20) -> tuple[Panel, int]:
    """Panel of mean decile score per period, plus the number of rows dropped.

    Subgroup is race, trajectory is recharge degree. Period p covers days
    ((p-1)*period_days, p*period_days]; day 0 joins period 1. Negative or
    missing days are dropped.
    """
    if period_days <= 0:
        raise ValueError("period_days must be positive")
    df = _rows_frame(rows)
    if df.empty:
        return Panel({}), 0
    days = df["days_before_reoffending"].astype(float)
    keep = days.notna() & (days >= 0)
    df = df.loc[keep]
    period = np.maximum(1, np.ceil(df["days_before_reoffending"].to_numpy(float) / period_days)).astype(int)
    table = (
        pd.DataFrame({
            "subgroup": df["race"].to_numpy(),
            "trajectory": df["recharge_degree"].to_numpy(),
            "period": period,
            "score": df["decile_score"].to_numpy(float),
        })
        .groupby(["subgroup", "trajectory", "period"], sort=True)["score"]
        .mean()
    )
    records = [(s, i, t, v) for (s, i, t), v in table.items()]
    return Panel.from_records(records), int((~keep).sum())


def binify(rows, period_days: int = 20) -> Panel:
    return binify_with_stats(rows, period_days)[0]


def post_features(rows) -> PostFeatures:
    """Feature table: decile score, summed prior incidents, age < 25, two-year label."""
    df = _rows_frame(rows)
    prior = (df["priors_count"] + df["juv_fel_count"] + df["juv_misd_count"]).to_numpy(float)
    X = np.column_stack([
        df["decile_score"].to_numpy(float),
        prior,
        (df["age"] < 25).to_numpy(float),
        df["two_year_recid"].to_numpy(float),
    ]) if len(df) else np.zeros((0, 4))
    return PostFeatures(df["race"].to_numpy(), df["id"].to_numpy(), X, df["two_year_recid"].to_numpy())


def split_train_test(features: PostFeatures, seed: int = 0, train_frac: float = 0.8):
    """Random split with ``floor(train_frac * n)`` training rows (804/201 for n = 1005)."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie in (0, 1)")
    n = len(features)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    perm = rng.permutation(n)
    n_train = math.floor(round(train_frac * n, 9))
    return features.take(np.sort(perm[:n_train])), features.take(np.sort(perm[n_train:]))
