"""Race-wise affine re-scoring under min-max fairness objectives.

Each subgroup gets a score model ``g = A x + e``. The fit minimises either
the largest per-subgroup mean absolute error (subgroup-fair) or the largest
single absolute error (instant-fair), plus ``lambda3 * sum_s e_s**2``.
Both are convex; they are posed as an epigraph program with LP rows for the
absolute values and one 2x2 block ``[[1, e], [e, r]]`` per subgroup for
``e**2 <= r``, and handed to the embedded SDP solver.

The label is one of the explanatory variables, so a model can reproduce
the label exactly and scoring uses the label at test time too. Pass
``include_label=False`` to drop it.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .lds import ObjectiveKind, _as_kind
from .metrics import LabeledScores, apply_thresholds
from .sdp import SdpBlock, SdpInstance, SolverConfig, Status, solve
from .validation import check_binary, check_groups

__all__ = [
    "FEATURES",
    "PostFeatures",
    "PostModel",
    "fit_post",
    "objective_value",
    "score",
    "classify",
    "write_scores_csv",
    "MinMaxPostProcessor",
]

FEATURES = ("compas_score", "prior_incidents", "age_under_25", "label")
FEATURE_HEADER = ["subgroup", "id", *FEATURES]
SCORES_HEADER = ["subgroup", "id", "score", "label", "prediction"]


class PostFitError(RuntimeError):
    pass


@dataclass
class PostFeatures:
    subgroup: np.ndarray
    ids: np.ndarray
    X: np.ndarray  # (n, 4) in FEATURES order
    y: np.ndarray

    def __post_init__(self):
        self.subgroup = np.asarray(self.subgroup, dtype=object).astype(str)
        self.ids = np.asarray(self.ids)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[1] != len(FEATURES):
            raise ValueError(f"feature matrix must have {len(FEATURES)} columns")
        self.y = check_binary(self.y, "label")
        n = len(self.subgroup)
        if not (self.X.shape[0] == self.y.shape[0] == self.ids.shape[0] == n):
            raise ValueError("feature table columns differ in length")

    def __len__(self) -> int:
        return len(self.subgroup)

    @property
    def groups(self) -> list[str]:
        return sorted(set(self.subgroup.tolist()))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "PostFeatures":
        missing = [c for c in FEATURE_HEADER if c not in frame.columns]
        if missing:
            raise ValueError(f"feature table lacks columns {missing}")
        return cls(frame["subgroup"].to_numpy(), frame["id"].to_numpy(),
                   frame[list(FEATURES)].to_numpy(dtype=float), frame["label"].to_numpy())

    @classmethod
    def read_csv(cls, path) -> "PostFeatures":
        return cls.from_frame(pd.read_csv(path, comment="#", dtype={"subgroup": str}))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=list(FEATURES))
        frame.insert(0, "id", self.ids)
        frame.insert(0, "subgroup", self.subgroup)
        for col in ("prior_incidents", "age_under_25", "label"):
            frame[col] = frame[col].astype(int)
        return frame

    def take(self, idx) -> "PostFeatures":
        idx = np.asarray(idx, dtype=int)
        return PostFeatures(self.subgroup[idx], self.ids[idx], self.X[idx], self.y[idx])


@dataclass
class PostModel:
    coef: dict[str, np.ndarray]
    intercept: dict[str, float]
    lambda3: float
    kind: ObjectiveKind
    include_label: bool = True
    objective: float = float("nan")
    solver_stats: dict = field(default_factory=dict)

    def design(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X if self.include_label else X[:, : len(FEATURES) - 1]


def _design(X: np.ndarray, include_label: bool) -> np.ndarray:
    return X if include_label else X[:, : len(FEATURES) - 1]


def objective_value(model: PostModel, data: PostFeatures) -> float:
    """Direct evaluation of the min-max objective at ``model``."""
    g = score(model, data.subgroup, data.X)
    err = np.abs(data.y - g)
    if model.kind is ObjectiveKind.SUBGROUP_FAIR:
        worst = max(float(err[data.subgroup == s].mean()) for s in data.groups)
    else:
        worst = float(err.max())
    return worst + model.lambda3 * sum(e * e for e in model.intercept.values())


def fit_post(train: PostFeatures, kind="subgroup-fair", lambda3: float = 0.05,
             include_label: bool = True, solver: SolverConfig | None = None) -> PostModel:
    kind = _as_kind(kind)
    if kind is ObjectiveKind.UNFAIR:
        raise ValueError("post-processing supports subgroup-fair and instant-fair only")
    if lambda3 < 0:
        raise ValueError("lambda3 must be nonnegative")
    groups = train.groups
    if not groups:
        raise ValueError("training table is empty")
    D = _design(train.X, include_label)
    p = D.shape[1]

    # variable layout: per subgroup [A (p), e], then z, then u (subgroup-fair), then r
    nv = 0
    slot = {}
    for s in groups:
        slot[s] = nv
        nv += p + 1
    z = nv
    nv += 1
    u0 = nv
    if kind is ObjectiveKind.SUBGROUP_FAIR:
        nv += len(train)
    r0 = nv
    if lambda3 > 0:
        nv += len(groups)

    c = np.zeros(nv)
    c[z] = 1.0
    blocks: list[SdpBlock] = []

    def lp_row(form: dict, const: float):
        blocks.append(SdpBlock(1, {(0, 0): form}, constant=np.array([[const]])))

    for row in range(len(train)):
        s = train.subgroup[row]
        base = slot[s]
        # residual Y - A x - e as a linear form
        res = {base + j: -float(D[row, j]) for j in range(p) if D[row, j] != 0.0}
        res[base + p] = -1.0
        top = z if kind is ObjectiveKind.INSTANT_FAIR else u0 + row
        for sign in (1.0, -1.0):
            form = {top: 1.0}
            for v, a in res.items():
                form[v] = form.get(v, 0.0) - sign * a
            lp_row(form, -sign * float(train.y[row]))
    if kind is ObjectiveKind.SUBGROUP_FAIR:
        for s in groups:
            rows = np.flatnonzero(train.subgroup == s)
            form = {z: 1.0}
            for row in rows:
                form[u0 + row] = -1.0 / len(rows)
            lp_row(form, 0.0)
    if lambda3 > 0:
        for k, s in enumerate(groups):
            c[r0 + k] = lambda3
            blocks.append(SdpBlock(2, {(0, 1): {slot[s] + p: 1.0}, (1, 1): {r0 + k: 1.0}},
                                   constant=np.array([[1.0, 0.0], [0.0, 0.0]]), label=f"intercept[{s}]"))

    inst = SdpInstance(num_vars=nv, objective=c, blocks=blocks, eq_rows=[], eq_rhs=[])
    sol = solve(inst, solver or SolverConfig())
    if sol.status is not Status.OPTIMAL:
        raise PostFitError(f"post-processing fit ended with status {sol.status.value}")
    coef, intercept = {}, {}
    for s in groups:
        b = slot[s]
        A = np.zeros(len(FEATURES))
        A[:p] = sol.y[b:b + p]
        coef[s] = A
        intercept[s] = float(sol.y[b + p])
    model = PostModel(coef, intercept, float(lambda3), kind, include_label, solver_stats=sol.summary())
    model.objective = objective_value(model, train)
    return model


def score(model: PostModel, subgroup: Sequence[str], X) -> np.ndarray:
    subgroup = np.asarray(subgroup, dtype=object).astype(str)
    X = np.asarray(X, dtype=float)
    unknown = sorted(set(subgroup.tolist()) - set(model.coef))
    if unknown:
        raise ValueError(f"no fitted model for subgroups {unknown}")
    out = np.empty(len(subgroup))
    for s in set(subgroup.tolist()):
        mask = subgroup == s
        out[mask] = X[mask] @ model.coef[s] + model.intercept[s]
    return out


def classify(scores, thresholds, subgroup=None) -> np.ndarray:
    """f = 1 iff score > threshold; ``thresholds`` is a float or a per-subgroup map."""
    scores = np.asarray(scores, dtype=float)
    if isinstance(thresholds, Mapping):
        if subgroup is None:
            raise ValueError("per-subgroup thresholds need the subgroup column")
        data = LabeledScores(subgroup, scores, np.zeros(len(scores), dtype=int))
        return apply_thresholds(data, thresholds)
    return (scores > float(thresholds)).astype(int)


def write_scores_csv(path, subgroup, ids, scores, labels, predictions, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORES_HEADER)
    for row in zip(subgroup, ids, scores, labels, predictions):
        w.writerow([row[0], row[1], repr(float(row[2])), int(row[3]), int(row[4])])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


class MinMaxPostProcessor(BaseEstimator):
    """Estimator interface: ``fit(X, y, groups)``, ``predict(X, groups)`` returns scores.

    ``X`` has the four feature columns (compas_score, prior_incidents,
    age_under_25, label).
    """

    def __init__(self, objective="subgroup-fair", lambda3=0.05, include_label=True, solver=None):
        self.objective = objective
        self.lambda3 = lambda3
        self.include_label = include_label
        self.solver = solver

    def fit(self, X, y, groups):
        X = check_array(X, dtype=float)
        if X.shape[1] != len(FEATURES):
            raise ValueError(f"X must have {len(FEATURES)} columns")
        y = check_binary(y)
        groups = check_groups(groups, X.shape[0])
        data = PostFeatures(groups, np.arange(X.shape[0]), X, y)
        self.model_ = fit_post(data, self.objective, self.lambda3, self.include_label, self.solver)
        self.groups_ = np.array(data.groups)
        self.objective_ = self.model_.objective
        return self

    def predict(self, X, groups):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return score(self.model_, check_groups(groups, X.shape[0]), X)

    def decision_function(self, X, groups):
        return self.predict(X, groups)
