"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

import numpy as np
import pandas as pd

from .lds import Panel, PanelError

PANEL_COLUMNS = ("subgroup", "trajectory", "period")


def _as_frame(X, columns) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame):
        missing = [c for c in columns if c not in X.columns]
        if missing:
            if X.shape[1] < len(columns):
                raise ValueError(f"expected columns {list(columns)}, missing {missing}")
            X = X.iloc[:, : len(columns)].set_axis(list(columns), axis=1)
        return X.loc[:, list(columns)].reset_index(drop=True)
    arr = np.asarray(X, dtype=object)
    if arr.ndim != 2 or arr.shape[1] < len(columns):
        raise ValueError(f"expected a 2-d table with columns {list(columns)}, got shape {arr.shape}")
    return pd.DataFrame(arr[:, : len(columns)], columns=list(columns))


def check_panel_table(X, y=None) -> Panel:
    """Long table (subgroup, trajectory, period[, value]) plus optional y -> Panel."""
    if isinstance(X, Panel):
        return X
    cols = PANEL_COLUMNS if y is not None else PANEL_COLUMNS + ("value",)
    frame = _as_frame(X, cols)
    if y is not None:
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != len(frame):
            raise ValueError(f"X has {len(frame)} rows but y has {y.shape[0]}")
        values = y
    else:
        values = frame["value"].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise PanelError("observations must be finite")
    return Panel.from_records(zip(frame["subgroup"], frame["trajectory"], frame["period"].astype(int), values))


def check_periods(X) -> np.ndarray:
    """Period column of a long table, or a 1-d array of periods."""
    if isinstance(X, Panel):
        return np.array([t for _, _, t in X.observations], dtype=int)
    if isinstance(X, pd.DataFrame):
        if "period" in X.columns:
            return X["period"].to_numpy(dtype=int)
        return X.iloc[:, -1].to_numpy(dtype=int)
    arr = np.asarray(X, dtype=object)
    if arr.ndim == 1:
        return arr.astype(int)
    if arr.ndim == 2 and arr.shape[1] >= 3:
        return arr[:, 2].astype(int)
    raise ValueError(f"cannot read periods from input of shape {arr.shape}")


def check_groups(groups, n: int) -> np.ndarray:
    groups = np.asarray(groups, dtype=object).ravel()
    if groups.shape[0] != n:
        raise ValueError(f"groups has {groups.shape[0]} entries, expected {n}")
    return groups.astype(str)


def check_binary(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y).ravel()
    if y.size and not np.isin(y, (0, 1)).all():
        raise ValueError(f"{name} must be binary (0/1)")
    return y.astype(int)
