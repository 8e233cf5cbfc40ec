"""Subgroup-blind LDS forecasting under fairness objectives.

A single hidden-state model ``m_t = G m_{t-1} + w_t``, ``f_t = F m_t + nu_t``
is fitted to trajectories of several subgroups. Every decision variable is a
Hermitian operator symbol, so the hidden-state dimension never has to be
chosen. The resulting noncommutative program goes through the moment
relaxation and the embedded SDP solver, and the forecasts are read off the
degree-one moments.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .ncpoly import OperatorSymbol, Polynomial, as_polynomial
from .npa import NcProblem, assemble, extract_estimates, rank_loop_flag
from .sdp import SdpSolution, SolverConfig, Status, solve

__all__ = [
    "Panel",
    "PanelError",
    "FitError",
    "ObjectiveKind",
    "LossMode",
    "FitConfig",
    "FitResult",
    "build_problem",
    "fit",
    "evaluate",
    "subgroup_losses",
    "FairLDSForecaster",
]

PANEL_HEADER = ["subgroup", "trajectory", "period", "value"]


class PanelError(ValueError):
    pass


class FitError(RuntimeError):
    """Solver failure; carries the formulation for debugging."""

    def __init__(self, message: str, problem: NcProblem | None = None, solution: SdpSolution | None = None):
        super().__init__(message)
        self.problem = problem
        self.solution = solution


# ----------------------------------------------------------------------------
# panel


@dataclass
class Panel:
    """Observations keyed by (subgroup, trajectory, period)."""

    observations: dict[tuple[str, str, int], float]
    subgroups: list[str] = field(default_factory=list)

    def __post_init__(self):
        clean = {}
        for key, value in self.observations.items():
            if len(key) != 3:
                raise PanelError(f"observation key {key!r} is not (subgroup, trajectory, period)")
            s, i, t = key
            if isinstance(t, float) and not t.is_integer():
                raise PanelError(f"period {t!r} is not an integer")
            t = int(t)
            if t < 1:
                raise PanelError(f"periods must be positive integers, got {t}")
            value = float(value)
            if not math.isfinite(value):
                raise PanelError(f"non-finite observation at {key!r}")
            clean[(str(s), str(i), t)] = value
        self.observations = dict(sorted(clean.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])))
        seen = sorted({s for s, _, _ in self.observations})
        declared = [str(s) for s in self.subgroups]
        self.subgroups = declared + [s for s in seen if s not in declared]

    @classmethod
    def from_records(cls, records: Iterable, subgroups: Iterable[str] | None = None) -> "Panel":
        obs = {}
        for s, i, t, v in records:
            key = (str(s), str(i), int(t))
            if key in obs:
                raise PanelError(f"duplicate observation {key!r}")
            obs[key] = float(v)
        return cls(obs, list(subgroups or []))

    @property
    def periods(self) -> list[int]:
        """T+: sorted periods with at least one observation."""
        return sorted({t for _, _, t in self.observations})

    def trajectories(self, subgroup: str) -> list[str]:
        return sorted({i for s, i, _ in self.observations if s == subgroup})

    def periods_of(self, subgroup: str, trajectory: str) -> list[int]:
        return sorted(t for s, i, t in self.observations if s == subgroup and i == trajectory)

    def count(self, subgroup: str | None = None) -> int:
        return sum(1 for s, _, _ in self.observations if subgroup is None or s == subgroup)

    def max_abs(self) -> float:
        return max((abs(v) for v in self.observations.values()), default=0.0)

    def __len__(self) -> int:
        return len(self.observations)

    def records(self) -> list[tuple[str, str, int, float]]:
        return [(s, i, t, v) for (s, i, t), v in self.observations.items()]

    def to_csv(self, path=None, header_lines: Iterable[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PANEL_HEADER)
        for s, i, t, v in self.records():
            w.writerow([s, i, t, repr(v)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def read_csv(cls, path_or_buffer) -> "Panel":
        if hasattr(path_or_buffer, "read"):
            text = path_or_buffer.read()
        else:
            with open(path_or_buffer, encoding="utf-8") as fh:
                text = fh.read()
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        reader = csv.DictReader(lines)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != PANEL_HEADER:
            raise PanelError(f"panel CSV header must be {','.join(PANEL_HEADER)}")
        records = []
        for row in reader:
            try:
                records.append((row["subgroup"], row["trajectory"], int(row["period"]), float(row["value"])))
            except (TypeError, ValueError) as exc:
                raise PanelError(f"bad panel row {row!r}: {exc}") from None
        return cls.from_records(records)


# ----------------------------------------------------------------------------
# configuration


class ObjectiveKind(str, enum.Enum):
    UNFAIR = "unfair"
    SUBGROUP_FAIR = "subgroup-fair"
    INSTANT_FAIR = "instant-fair"


class LossMode(str, enum.Enum):
    ABSOLUTE = "abs"
    SQUARED = "sq"


def _as_kind(value) -> ObjectiveKind:
    if isinstance(value, ObjectiveKind):
        return value
    key = str(value).strip().lower().replace("_", "-")
    aliases = {"subgroupfair": "subgroup-fair", "instantfair": "instant-fair"}
    try:
        return ObjectiveKind(aliases.get(key.replace("-", ""), key))
    except ValueError:
        raise ValueError(f"unknown objective {value!r}; expected one of "
                         f"{[k.value for k in ObjectiveKind]}") from None


def _as_loss(value) -> LossMode:
    if isinstance(value, LossMode):
        return value
    key = str(value).strip().lower()
    aliases = {"absolute": "abs", "squared": "sq"}
    try:
        return LossMode(aliases.get(key, key))
    except ValueError:
        raise ValueError(f"unknown loss mode {value!r}; expected abs or sq") from None


@dataclass
class FitConfig:
    objective_kind: ObjectiveKind | str = ObjectiveKind.SUBGROUP_FAIR
    lambda1: float = 1.0
    lambda2: float = 0.01
    loss_mode: LossMode | str = LossMode.ABSOLUTE
    relax_order: int = 1
    ball_radius: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    identify_adjoints: bool = True

    # lambda1 presets used for the three models in the biased-data study
    LAMBDA1_PRESETS = (1.0, 3.0, 5.0)

    def __post_init__(self):
        self.objective_kind = _as_kind(self.objective_kind)
        self.loss_mode = _as_loss(self.loss_mode)
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")
        if self.relax_order < 1:
            raise ValueError("relaxation order must be at least 1")
        if self.ball_radius is not None and self.ball_radius <= 0:
            raise ValueError("ball radius must be positive")

    def radius_for(self, panel: Panel) -> float:
        if self.ball_radius is not None:
            return float(self.ball_radius)
        return 10.0 * max(panel.max_abs(), 1.0)


# ----------------------------------------------------------------------------
# formulation


@dataclass
class _Symbols:
    table: dict[str, OperatorSymbol] = field(default_factory=dict)

    def new(self, label: str) -> OperatorSymbol:
        sym = OperatorSymbol(len(self.table), label)
        self.table[label] = sym
        return sym


def _predecessors(periods: list[int]) -> dict[int, int]:
    """Previous element of T+ u {0} for each period in T+."""
    chain = [0] + periods
    return {t: chain[k] for k, t in enumerate(chain[1:])}


def _check_panel(panel: Panel) -> None:
    if not len(panel):
        raise PanelError("panel has no observations")
    for s in panel.subgroups:
        if panel.count(s) == 0:
            raise PanelError(f"subgroup {s!r} has no observations")


def build_problem(panel: Panel, config: FitConfig) -> NcProblem:
    _check_panel(panel)
    kind, loss = config.objective_kind, config.loss_mode
    if loss is LossMode.SQUARED and config.relax_order < 2:
        raise ValueError("squared loss yields degree-4 polynomials and needs relaxation order >= 2")

    periods = panel.periods
    prev = _predecessors(periods)
    syms = _Symbols()
    G, F = syms.new("G"), syms.new("F")
    z = syms.new("z") if kind is not ObjectiveKind.UNFAIR else None
    m = {t: syms.new(f"m_{t}") for t in [0] + periods}
    w, nu, f = {}, {}, {}
    for t in periods:
        w[t] = syms.new(f"w_{t}")
        nu[t] = syms.new(f"nu_{t}")
        f[t] = syms.new(f"f_{t}")

    equalities = []
    eq_labels = []
    for t in periods:
        equalities.append(m[t] - G * m[prev[t]] - w[t])
        eq_labels.append(f"state[{t}]")
        equalities.append(f[t] - F * m[t] - nu[t])
        eq_labels.append(f"observe[{t}]")

    penalty = Polynomial()
    for t in periods:
        penalty = penalty + config.lambda1 * (w[t] * w[t]) + config.lambda2 * (nu[t] * nu[t])

    inequalities: list[Polynomial] = []
    ineq_labels: list[str] = []
    u: dict[tuple[str, str, int], OperatorSymbol] = {}
    needs_aux = loss is LossMode.ABSOLUTE and kind is not ObjectiveKind.INSTANT_FAIR
    if needs_aux:
        for (s, i, t) in panel.observations:
            u[(s, i, t)] = syms.new(f"u[{s},{i},{t}]")

    def residual(key) -> Polynomial:
        s, i, t = key
        return as_polynomial(panel.observations[key]) - f[t]

    def squared_loss(key) -> Polynomial:
        # A'A with A = Y - F m_t - nu_t keeps the loss Hermitian
        s, i, t = key
        A = as_polynomial(panel.observations[key]) - F * m[t] - nu[t]
        return A.adjoint() * A

    def obs_loss(key) -> Polynomial:
        if loss is LossMode.ABSOLUTE:
            return as_polynomial(u[key])
        return squared_loss(key)

    if needs_aux:
        for key in panel.observations:
            r = residual(key)
            inequalities.append(u[key] - r)
            ineq_labels.append(f"abs+{list(key)}")
            inequalities.append(u[key] + r)
            ineq_labels.append(f"abs-{list(key)}")

    if kind is ObjectiveKind.UNFAIR:
        total = Polynomial()
        for key in panel.observations:
            total = total + obs_loss(key)
        objective = total + penalty
    else:
        objective = as_polynomial(z) + penalty
        if kind is ObjectiveKind.SUBGROUP_FAIR:
            for s in panel.subgroups:
                trajs = panel.trajectories(s)
                expr = as_polynomial(z)
                for i in trajs:
                    ts = panel.periods_of(s, i)
                    weight = 1.0 / (len(trajs) * len(ts))
                    for t in ts:
                        expr = expr - weight * obs_loss((s, i, t))
                inequalities.append(expr)
                ineq_labels.append(f"subgroup[{s}]")
        else:
            for key in panel.observations:
                if loss is LossMode.ABSOLUTE:
                    r = residual(key)
                    inequalities.append(z - r)
                    ineq_labels.append(f"instant+{list(key)}")
                    inequalities.append(z + r)
                    ineq_labels.append(f"instant-{list(key)}")
                else:
                    inequalities.append(z - squared_loss(key))
                    ineq_labels.append(f"instant{list(key)}")

    # written as 1 - sum X^2 / C^2 so the localiser stays O(1)
    radius = config.radius_for(panel)
    ball = as_polynomial(1.0)
    for sym in syms.table.values():
        ball = ball - (sym * sym).scale(1.0 / (radius * radius))
    inequalities.append(ball)
    ineq_labels.append("ball")

    return NcProblem(
        variables=list(syms.table.values()),
        objective=objective,
        inequalities=inequalities,
        equalities=equalities,
        labels={"inequalities": ineq_labels, "equalities": eq_labels},
    )


# ----------------------------------------------------------------------------
# evaluation


def subgroup_losses(panel: Panel, forecasts: Mapping[int, float]) -> dict[str, float]:
    """Per-subgroup weighted mean absolute loss, as in the subgroup-fair objective."""
    out = {}
    for s in panel.subgroups:
        trajs = panel.trajectories(s)
        total = 0.0
        for i in trajs:
            ts = panel.periods_of(s, i)
            total += sum(abs(panel.observations[(s, i, t)] - forecasts[t]) for t in ts) / len(ts)
        out[s] = total / len(trajs) if trajs else math.nan
    return out


def evaluate(panel: Panel, forecasts: Mapping[int, float]) -> dict[str, float | None]:
    """Normalised RMSE per subgroup; None when the subgroup data are constant."""
    missing = [t for t in panel.periods if t not in forecasts]
    if missing:
        raise ValueError(f"forecasts missing for periods {missing}")
    out: dict[str, float | None] = {}
    for s in panel.subgroups:
        trajs = panel.trajectories(s)
        if not trajs:
            out[s] = None
            continue
        mean = sum(
            sum(panel.observations[(s, i, t)] for t in panel.periods_of(s, i)) / len(panel.periods_of(s, i))
            for i in trajs
        ) / len(trajs)
        num = den = 0.0
        for i in trajs:
            for t in panel.periods_of(s, i):
                y = panel.observations[(s, i, t)]
                num += (y - forecasts[t]) ** 2
                den += (y - mean) ** 2
        out[s] = math.sqrt(num / den) if den > 0 else None
    return out


# ----------------------------------------------------------------------------
# fitting


@dataclass
class FitResult:
    forecasts: dict[int, float]
    z: float
    estimates: dict[str, float]
    objective_bound: float
    per_subgroup_loss: dict[str, float]
    nrmse: dict[str, float | None]
    solver_stats: dict
    rank_loop: bool
    num_vars: int = 0

    def to_json_dict(self) -> dict:
        return {
            "forecasts": {str(t): v for t, v in sorted(self.forecasts.items())},
            "z": self.z,
            "objective_bound": self.objective_bound,
            "per_subgroup_loss": dict(sorted(self.per_subgroup_loss.items())),
            "nrmse": dict(sorted(self.nrmse.items())),
            "solver": {k: self.solver_stats[k] for k in ("status", "iterations", "gap")},
            "rank_loop": self.rank_loop,
        }

    def to_json(self, **extra) -> str:
        payload = self.to_json_dict()
        payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def fit(panel: Panel, config: FitConfig | None = None) -> FitResult:
    config = config or FitConfig()
    problem = build_problem(panel, config)
    k = config.relax_order
    instance = assemble(problem, k, identify_adjoints=config.identify_adjoints)
    solution = solve(instance, config.solver)
    if solution.status is not Status.OPTIMAL:
        raise FitError(f"SDP solver returned {solution.status.value} after {solution.iterations} iterations",
                       problem=problem, solution=solution)
    est = extract_estimates(solution, instance.index, problem.variables)
    by_label = {sym.label: val for sym, val in est.items()}
    forecasts = {t: by_label[f"f_{t}"] for t in panel.periods}
    if config.objective_kind is ObjectiveKind.UNFAIR:
        z = sum(abs(v - forecasts[t]) for (_, _, t), v in panel.observations.items())
    else:
        z = by_label["z"]
    shift = max([math.ceil(q.degree / 2) for q in problem.inequalities] + [1])
    return FitResult(
        forecasts=forecasts,
        z=float(z),
        estimates=by_label,
        objective_bound=float(solution.objective),
        per_subgroup_loss=subgroup_losses(panel, forecasts),
        nrmse=evaluate(panel, forecasts),
        solver_stats=solution.summary(),
        rank_loop=bool(rank_loop_flag(solution, instance.index, k, shift=shift)),
        num_vars=instance.num_vars,
    )


# ----------------------------------------------------------------------------
# estimator interface


def _panel_from_xy(X, y=None) -> Panel:
    from .validation import check_panel_table

    return check_panel_table(X, y)


class FairLDSForecaster(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit`.

    ``X`` is a long table with columns (subgroup, trajectory, period) and ``y``
    the observed values, or ``X`` is a :class:`Panel` and ``y`` is omitted.
    ``predict`` returns the fitted forecast at each row's period.
    """

    def __init__(self, objective="subgroup-fair", lambda1=1.0, lambda2=0.01, loss="abs",
                 order=1, ball_radius=None, solver=None):
        self.objective = objective
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.loss = loss
        self.order = order
        self.ball_radius = ball_radius
        self.solver = solver

    def _config(self) -> FitConfig:
        return FitConfig(objective_kind=self.objective, lambda1=self.lambda1, lambda2=self.lambda2,
                         loss_mode=self.loss, relax_order=self.order, ball_radius=self.ball_radius,
                         solver=self.solver or SolverConfig())

    def fit(self, X, y=None):
        panel = X if isinstance(X, Panel) else _panel_from_xy(X, y)
        self.result_ = fit(panel, self._config())
        self.forecasts_ = dict(self.result_.forecasts)
        self.z_ = self.result_.z
        self.nrmse_ = dict(self.result_.nrmse)
        self.periods_ = np.array(sorted(self.forecasts_))
        return self

    def predict(self, X):
        check_is_fitted(self, "forecasts_")
        from .validation import check_periods

        periods = check_periods(X)
        unknown = sorted(set(periods.tolist()) - set(self.forecasts_))
        if unknown:
            raise ValueError(f"no forecast for periods {unknown}; forecasts exist only on observed periods")
        return np.array([self.forecasts_[int(t)] for t in periods])
