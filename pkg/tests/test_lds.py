import io
import itertools
import math

import numpy as np
import pandas as pd
import pytest

from fairlds.lds import (
    FairLDSForecaster,
    FitConfig,
    ObjectiveKind,
    Panel,
    PanelError,
    build_problem,
    evaluate,
    fit,
    subgroup_losses,
)
from fairlds.ncpoly import Monomial


def cfg(kind, **kw):
    kw.setdefault("lambda1", 0.0)
    kw.setdefault("lambda2", 0.0)
    return FitConfig(objective_kind=kind, **kw)


def full_panel(T=3):
    rec = [("a", "0", t, 1.0 + t) for t in range(1, T + 1)] + [("d", "0", t, 2.0 * t) for t in range(1, T + 1)]
    return Panel.from_records(rec)


ZERO_TEN = Panel.from_records([("a", "0", 1, 0.0), ("d", "0", 1, 10.0)])
THREE_ONE = Panel.from_records([("a", str(i), 1, 0.0) for i in range(3)] + [("d", "0", 1, 10.0)])


# -- formulation counts ------------------------------------------------------

def test_subgroup_fair_counts():
    prob = build_problem(full_panel(), cfg("subgroup-fair"))
    labels = prob.labels["inequalities"]
    assert len(prob.equalities) == 6
    assert sum(lab.startswith("abs") for lab in labels) == 12
    assert sum(lab.startswith("subgroup") for lab in labels) == 2
    assert labels.count("ball") == 1
    assert len(prob.inequalities) == 15


def test_instant_fair_counts():
    prob = build_problem(full_panel(), cfg("instant-fair"))
    labels = prob.labels["inequalities"]
    assert len(prob.equalities) == 6
    assert sum(lab.startswith("instant") for lab in labels) == 12
    assert not any(lab.startswith("subgroup") for lab in labels)
    assert len(prob.inequalities) == 13


def test_variable_set():
    prob = build_problem(full_panel(), cfg("subgroup-fair"))
    names = {v.label for v in prob.variables}
    assert {"G", "F", "z", "m_0", "m_1", "m_3", "w_2", "nu_3", "f_1"} <= names
    assert sum(n.startswith("u[") for n in names) == 6
    unfair = {v.label for v in build_problem(full_panel(), cfg("unfair")).variables}
    assert "z" not in unfair


def test_predecessor_skips_missing_periods():
    p = Panel.from_records([("a", "0", 1, 1.0), ("a", "0", 4, 2.0), ("d", "0", 4, 3.0)])
    prob = build_problem(p, cfg("subgroup-fair"))
    lab = prob.symbol_labels
    state4 = prob.equalities[prob.labels["equalities"].index("state[4]")]
    words = {tuple(lab[i] for i in m.word) for m in state4.monomials()}
    assert ("G", "m_1") in words


def test_squared_needs_order_two():
    with pytest.raises(ValueError):
        build_problem(full_panel(), cfg("unfair", loss_mode="sq"))
    prob = build_problem(full_panel(1), cfg("unfair", loss_mode="sq", relax_order=2))
    assert prob.objective.degree == 4


def test_subgroup_weights():
    p = Panel.from_records([("a", "0", 1, 1.0), ("a", "0", 2, 1.0), ("a", "1", 1, 1.0), ("d", "0", 2, 3.0)])
    prob = build_problem(p, cfg("subgroup-fair"))
    lab = prob.symbol_labels
    row = prob.inequalities[prob.labels["inequalities"].index("subgroup[a]")]
    coef = {lab[m.word[0]]: c for m, c in row.items()}
    assert coef["z"] == 1.0
    assert coef["u[a,0,1]"] == pytest.approx(-1 / 4) and coef["u[a,0,2]"] == pytest.approx(-1 / 4)
    assert coef["u[a,1,1]"] == pytest.approx(-1 / 2)


@pytest.mark.parametrize("Y,f,u", list(itertools.product([-2.0, 0.0, 3.5], [-1.0, 0.5, 3.5], [0.0, 1.0, 2.5, 6.0])))
def test_epigraph_pair_matches_absolute_value(Y, f, u):
    p = Panel.from_records([("a", "0", 1, Y)])
    prob = build_problem(p, cfg("subgroup-fair"))
    lab = prob.symbol_labels
    values = {"u[a,0,1]": u, "f_1": f}

    def scalar(poly):
        total = 0.0
        for m, c in poly.items():
            total += c * math.prod(values[lab[i]] for i in m.word)
        return total

    pair = [q for q, name in zip(prob.inequalities, prob.labels["inequalities"]) if name.startswith("abs")]
    assert (all(scalar(q) >= 0 for q in pair)) == (u >= abs(Y - f))


def test_empty_subgroup_rejected():
    with pytest.raises(PanelError):
        build_problem(Panel({("a", "0", 1): 1.0}, subgroups=["a", "d"]), cfg("subgroup-fair"))


# -- analytic fits -----------------------------------------------------------

@pytest.mark.parametrize("kind", ["unfair", "subgroup-fair", "instant-fair"])
def test_constant_panel_perfect_fit(kind):
    p = Panel.from_records([(s, "0", t, 3.0) for s in "ad" for t in (1, 2)])
    res = fit(p, cfg(kind))
    for t in (1, 2):
        assert res.forecasts[t] == pytest.approx(3.0, abs=1e-5)
    assert abs(res.z) < 1e-5
    assert abs(res.objective_bound) < 1e-5


def test_zero_ten_subgroup_fair():
    res = fit(ZERO_TEN, cfg("subgroup-fair"))
    assert res.z == pytest.approx(5.0, abs=1e-4)
    assert res.forecasts[1] == pytest.approx(5.0, abs=1e-4)
    assert res.per_subgroup_loss["a"] == pytest.approx(5.0, abs=1e-4)


def test_zero_ten_instant_fair():
    assert fit(ZERO_TEN, cfg("instant-fair")).forecasts[1] == pytest.approx(5.0, abs=1e-4)


def test_zero_ten_unfair_any_minimiser():
    res = fit(ZERO_TEN, cfg("unfair"))
    assert -1e-4 <= res.forecasts[1] <= 10 + 1e-4
    assert res.z == pytest.approx(10.0, abs=1e-4)


def test_three_one_weighted_median():
    assert fit(THREE_ONE, cfg("unfair")).forecasts[1] == pytest.approx(0.0, abs=1e-4)
    assert fit(THREE_ONE, cfg("subgroup-fair")).forecasts[1] == pytest.approx(5.0, abs=1e-4)


def test_bound_below_hand_assignment():
    # any scalar f gives a feasible point of the fair program with z = max subgroup loss
    res = fit(full_panel(2), cfg("subgroup-fair"))
    p = full_panel(2)
    for f in (2.0, 3.0, 3.5):
        hand = max(subgroup_losses(p, {1: f, 2: f}).values())
        assert res.objective_bound <= hand + 1e-6
    assert res.objective_bound <= max(res.per_subgroup_loss.values()) + 1e-6


def test_rank_loop_reported_and_json_keys():
    res = fit(ZERO_TEN, cfg("subgroup-fair"))
    d = res.to_json_dict()
    assert list(d) == ["forecasts", "z", "objective_bound", "per_subgroup_loss", "nrmse", "solver", "rank_loop"]
    assert set(d["solver"]) == {"status", "iterations", "gap"}
    assert isinstance(d["rank_loop"], bool)


# -- evaluate ----------------------------------------------------------------

def test_nrmse_examples():
    p = Panel.from_records([("a", "0", 1, 1.0), ("a", "0", 2, 3.0)])
    assert evaluate(p, {1: 2.0, 2: 2.0})["a"] == pytest.approx(1.0)
    assert evaluate(p, {1: 1.0, 2: 3.0})["a"] == 0.0
    const = Panel.from_records([("a", "0", 1, 4.0), ("a", "0", 2, 4.0)])
    assert evaluate(const, {1: 0.0, 2: 0.0})["a"] is None
    with pytest.raises(ValueError):
        evaluate(p, {1: 2.0})


# -- panel I/O ---------------------------------------------------------------

def test_panel_csv_round_trip():
    p = full_panel()
    text = p.to_csv(header_lines=["made by test"])
    assert text.startswith("# made by test\nsubgroup,trajectory,period,value\n")
    q = Panel.read_csv(io.StringIO(text))
    assert q.observations == p.observations


@pytest.mark.parametrize("bad", [
    "subgroup,trajectory,period\na,0,1\n",
    "subgroup,trajectory,period,value\na,0,0,1.0\n",
    "subgroup,trajectory,period,value\na,0,1,x\n",
    "subgroup,trajectory,period,value\na,0,1,1\na,0,1,2\n",
])
def test_panel_csv_rejects(bad):
    with pytest.raises(PanelError):
        Panel.read_csv(io.StringIO(bad))


def test_panel_missing_periods_allowed():
    p = Panel.from_records([("a", "0", 2, 1.0), ("d", "0", 5, 1.0)])
    assert p.periods == [2, 5]
    assert p.periods_of("a", "0") == [2]


# -- estimator interface -----------------------------------------------------

def test_estimator_fit_predict():
    X = pd.DataFrame({"subgroup": ["a", "d"], "trajectory": ["0", "0"], "period": [1, 1]})
    est = FairLDSForecaster(objective="subgroup-fair", lambda1=0.0, lambda2=0.0).fit(X, [0.0, 10.0])
    np.testing.assert_allclose(est.predict(X), [5.0, 5.0], atol=1e-4)
    assert est.get_params()["objective"] == "subgroup-fair"
    with pytest.raises(ValueError):
        est.predict(np.array([2]))


def test_estimator_requires_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        FairLDSForecaster().predict(np.array([1]))


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(objective_kind="nope")
    with pytest.raises(ValueError):
        FitConfig(lambda1=-1)
    assert FitConfig(objective_kind="SubgroupFair").objective_kind is ObjectiveKind.SUBGROUP_FAIR
