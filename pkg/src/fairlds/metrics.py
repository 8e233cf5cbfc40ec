"""Two-subgroup classification fairness indices and thresholding.

Conventions: a row is predicted positive iff its score is strictly above the
threshold. Percentiles use linear interpolation between closest ranks
(numpy's default ``linear`` method).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "LabeledScores",
    "FairnessReport",
    "uni_race_threshold",
    "race_wise_thresholds",
    "base_rates",
    "apply_thresholds",
    "confusion",
    "indices",
    "reweight_test_set",
    "fairness_report",
]

DEFAULT_GROUPS = ("African-American", "Caucasian")


@dataclass
class LabeledScores:
    """Rows of (subgroup, score, label)."""

    subgroup: np.ndarray
    score: np.ndarray
    label: np.ndarray
    ids: np.ndarray | None = None

    def __post_init__(self):
        self.subgroup = np.asarray(self.subgroup, dtype=object).astype(str)
        self.score = np.asarray(self.score, dtype=float).ravel()
        self.label = np.asarray(self.label).ravel()
        n = len(self.subgroup)
        if self.score.shape[0] != n or self.label.shape[0] != n:
            raise ValueError("subgroup, score and label must have equal length")
        if n and not np.isin(self.label, (0, 1)).all():
            raise ValueError("labels must be binary (0/1)")
        self.label = self.label.astype(int)
        if self.ids is None:
            self.ids = np.arange(n)
        else:
            self.ids = np.asarray(self.ids)

    def __len__(self) -> int:
        return len(self.subgroup)

    @property
    def groups(self) -> list[str]:
        return sorted(set(self.subgroup.tolist()))

    def take(self, idx) -> "LabeledScores":
        idx = np.asarray(idx, dtype=int)
        return LabeledScores(self.subgroup[idx], self.score[idx], self.label[idx], self.ids[idx])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"subgroup": self.subgroup, "id": self.ids, "score": self.score, "label": self.label})


def uni_race_threshold(scores: Sequence[float], x: float) -> float:
    scores = np.asarray(scores, dtype=float).ravel()
    if scores.size == 0:
        raise ValueError("cannot take a percentile of no scores")
    if not 0.0 <= x <= 100.0:
        raise ValueError(f"percentile must lie in [0, 100], got {x}")
    return float(np.percentile(scores, x))


def base_rates(data: LabeledScores) -> dict[str, float]:
    return {g: float(data.label[data.subgroup == g].mean()) for g in data.groups}


def _rate_threshold(scores: np.ndarray, rate: float) -> float:
    """Largest threshold flagging at least ``rate`` of the scores (strict >)."""
    n = scores.size
    k = math.ceil(round(rate * n, 12))
    s = np.sort(scores)[::-1]
    if k <= 0:
        return float(s[0])
    if k >= n:
        return float(np.nextafter(s[-1], -np.inf))
    below = s[s < s[k - 1]]
    return float(below[0]) if below.size else float(np.nextafter(s[-1], -np.inf))


def race_wise_thresholds(data: LabeledScores, rates: Mapping[str, float] | None = None) -> dict[str, float]:
    """Per-subgroup threshold whose positive fraction matches the subgroup base rate.

    ``rates`` overrides the base rates, e.g. to use rates measured on a
    training split while thresholding test scores.
    """
    rates = dict(rates) if rates is not None else base_rates(data)
    out = {}
    for g in data.groups:
        scores = data.score[data.subgroup == g]
        if scores.size == 0:
            raise ValueError(f"subgroup {g!r} is empty")
        if g not in rates:
            raise ValueError(f"no base rate for subgroup {g!r}")
        out[g] = _rate_threshold(scores, rates[g])
    return out


def apply_thresholds(data: LabeledScores, thresholds: float | Mapping[str, float]) -> np.ndarray:
    if isinstance(thresholds, Mapping):
        missing = set(data.groups) - set(thresholds)
        if missing:
            raise ValueError(f"no threshold for subgroups {sorted(missing)}")
        th = np.array([thresholds[g] for g in data.subgroup], dtype=float)
    else:
        th = float(thresholds)
    return (data.score > th).astype(int)


def confusion(label: np.ndarray, pred: np.ndarray) -> dict[str, int]:
    label, pred = np.asarray(label), np.asarray(pred)
    return {
        "TP": int(np.sum((label == 1) & (pred == 1))),
        "FP": int(np.sum((label == 0) & (pred == 1))),
        "FN": int(np.sum((label == 1) & (pred == 0))),
        "TN": int(np.sum((label == 0) & (pred == 0))),
    }


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def _absdiff(a, b) -> float | None:
    return None if a is None or b is None else abs(a - b)


def _sum(*parts) -> float | None:
    return None if any(p is None for p in parts) else float(sum(parts))


def _indices_from_tables(t1: dict, t2: dict) -> tuple[dict, list[str]]:
    n1 = sum(t1.values())
    n2 = sum(t2.values())
    # P(f=1 | s); its complement gives the same absolute difference
    pos1 = _ratio(t1["TP"] + t1["FP"], n1)
    pos2 = _ratio(t2["TP"] + t2["FP"], n2)
    # P(f=1 | Y=0, s) and P(f=0 | Y=1, s)
    fpr1, fpr2 = _ratio(t1["FP"], t1["FP"] + t1["TN"]), _ratio(t2["FP"], t2["FP"] + t2["TN"])
    fnr1, fnr2 = _ratio(t1["FN"], t1["FN"] + t1["TP"]), _ratio(t2["FN"], t2["FN"] + t2["TP"])
    # sufficiency pairs P(Y=1 | f=1, s) with P(f=0 | Y=0, s), the latter as written
    # in the index definition rather than the negative predictive value
    ppv1, ppv2 = _ratio(t1["TP"], t1["TP"] + t1["FP"]), _ratio(t2["TP"], t2["TP"] + t2["FP"])
    tnr1, tnr2 = _ratio(t1["TN"], t1["TN"] + t1["FP"]), _ratio(t2["TN"], t2["TN"] + t2["FP"])
    out = {
        "IND": _absdiff(pos1, pos2),
        "SP": _sum(_absdiff(fpr1, fpr2), _absdiff(fnr1, fnr2)),
        "SF": _sum(_absdiff(ppv1, ppv2), _absdiff(tnr1, tnr2)),
        "INA": _ratio(t1["FP"] + t1["FN"] + t2["FP"] + t2["FN"], n1 + n2),
    }
    undefined = [k for k, v in out.items() if v is None]
    return out, undefined


def indices(data: LabeledScores, predictions, groups: Sequence[str] | None = None) -> dict:
    """IND, SP, SF, INA of binary predictions; undefined conditionals give None."""
    groups = list(groups) if groups is not None else data.groups
    if len(groups) != 2:
        raise ValueError(f"exactly two subgroups are required, got {groups}")
    pred = np.asarray(predictions).ravel()
    if pred.shape[0] != len(data):
        raise ValueError("predictions must align with rows")
    tables = {}
    for g in groups:
        mask = data.subgroup == g
        if not mask.any():
            raise ValueError(f"subgroup {g!r} is missing")
        tables[g] = confusion(data.label[mask], pred[mask])
    vals, undefined = _indices_from_tables(tables[groups[0]], tables[groups[1]])
    return {"indices": vals, "undefined": undefined, "confusion": tables}


def reweight_test_set(data: LabeledScores, seed: int = 0) -> LabeledScores:
    """Drop random rows of the larger subgroup until both subgroups are equal in size."""
    groups = data.groups
    counts = {g: int(np.sum(data.subgroup == g)) for g in groups}
    target = min(counts.values())
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    keep = []
    for g in groups:
        idx = np.flatnonzero(data.subgroup == g)
        if idx.size > target:
            idx = np.sort(rng.choice(idx, size=target, replace=False))
        keep.append(idx)
    return data.take(np.sort(np.concatenate(keep)))


@dataclass
class FairnessReport:
    IND: float | None
    SP: float | None
    SF: float | None
    INA: float | None
    INDrw: float | None
    SPrw: float | None
    SFrw: float | None
    INArw: float | None
    thresholds: dict
    confusion: dict
    confusion_rw: dict
    undefined: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "indices": {k: getattr(self, k) for k in ("IND", "SP", "SF", "INA", "INDrw", "SPrw", "SFrw", "INArw")},
            "thresholds": self.thresholds,
            "confusion": self.confusion,
            "confusion_rw": self.confusion_rw,
            "undefined": self.undefined,
        }

    def to_json(self, **extra) -> str:
        payload = self.to_dict()
        payload.update(extra)
        return json.dumps(payload, indent=2) + "\n"


def fairness_report(data: LabeledScores, thresholds: float | Mapping[str, float], seed: int = 0,
                    groups: Sequence[str] | None = None) -> FairnessReport:
    """Indices on ``data`` and on its subgroup-balanced resample, at fixed thresholds."""
    full = indices(data, apply_thresholds(data, thresholds), groups)
    balanced = reweight_test_set(data, seed)
    rw = indices(balanced, apply_thresholds(balanced, thresholds), groups)
    th = dict(thresholds) if isinstance(thresholds, Mapping) else {"shared": float(thresholds)}
    return FairnessReport(
        **full["indices"],
        **{k + "rw": v for k, v in rw["indices"].items()},
        thresholds=th,
        confusion=full["confusion"],
        confusion_rw=rw["confusion"],
        undefined=full["undefined"] + [k + "rw" for k in rw["undefined"]],
    )
