import numpy as np
import pytest
from scipy.optimize import linprog

from fairlds.lds import ObjectiveKind
from fairlds.metrics import LabeledScores, apply_thresholds, base_rates, race_wise_thresholds
from fairlds.postprocess import (
    MinMaxPostProcessor,
    PostFeatures,
    PostModel,
    classify,
    fit_post,
    objective_value,
    score,
    write_scores_csv,
)


def features(rows):
    """rows: (subgroup, compas, priors, young, label)."""
    sub = [r[0] for r in rows]
    X = np.array([[r[1], r[2], r[3], r[4]] for r in rows], dtype=float)
    return PostFeatures(sub, np.arange(len(rows)), X, [r[4] for r in rows])


def random_instance(seed, n=6):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        rows.append(("AA" if i % 2 == 0 else "C", float(rng.integers(1, 11)), int(rng.integers(0, 4)),
                     int(rng.integers(0, 2)), int(rng.integers(0, 2))))
    return features(rows)


def lp_oracle(data, kind, p):
    """Independent min-max LP over (A_s, e_s, t) with per-row absolute value rows."""
    groups = data.groups
    D = data.X[:, :p]
    nv = len(groups) * (p + 1) + 1 + len(data)
    t = nv - 1 - len(data)
    c = np.zeros(nv)
    c[t] = 1.0
    A_ub, b_ub = [], []
    for r in range(len(data)):
        g = groups.index(data.subgroup[r])
        base = g * (p + 1)
        pred = np.zeros(nv)
        pred[base:base + p] = D[r]
        pred[base + p] = 1.0
        slack = t + 1 + r
        for sign in (1, -1):
            row = sign * pred
            row[slack] -= 1.0
            A_ub.append(row)
            b_ub.append(sign * data.y[r])
    if kind == "subgroup-fair":
        for g in groups:
            rows = np.flatnonzero(data.subgroup == g)
            row = np.zeros(nv)
            row[t] = -1.0
            row[t + 1 + rows] = 1.0 / len(rows)
            A_ub.append(row)
            b_ub.append(0.0)
    else:
        for r in range(len(data)):
            row = np.zeros(nv)
            row[t] = -1.0
            row[t + 1 + r] = 1.0
            A_ub.append(row)
            b_ub.append(0.0)
    res = linprog(c, A_ub=np.array(A_ub), b_ub=b_ub, bounds=[(None, None)] * nv, method="highs")
    return res.fun


def qp_oracle(data, kind, p, lam):
    cp = pytest.importorskip("cvxpy")
    groups = data.groups
    A = {g: cp.Variable(p) for g in groups}
    e = {g: cp.Variable() for g in groups}
    D = data.X[:, :p]
    errs = [cp.abs(data.y[r] - (D[r] @ A[data.subgroup[r]] + e[data.subgroup[r]])) for r in range(len(data))]
    if kind == "subgroup-fair":
        worst = cp.maximum(*[sum(errs[r] for r in np.flatnonzero(data.subgroup == g)) / int((data.subgroup == g).sum())
                             for g in groups])
    else:
        worst = cp.maximum(*errs)
    prob = cp.Problem(cp.Minimize(worst + lam * sum(cp.square(e[g]) for g in groups)))
    return prob.solve(solver="CLARABEL")


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind", ["subgroup-fair", "instant-fair"])
def test_matches_lp_oracle_without_penalty(seed, kind):
    data = random_instance(seed)
    model = fit_post(data, kind, lambda3=0.0, include_label=False)
    assert model.objective == pytest.approx(lp_oracle(data, kind, 3), abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("kind", ["subgroup-fair", "instant-fair"])
@pytest.mark.parametrize("lam", [0.05, 5.0])
def test_matches_qp_oracle_with_penalty(seed, kind, lam):
    data = random_instance(seed)
    model = fit_post(data, kind, lambda3=lam, include_label=False)
    assert model.objective == pytest.approx(qp_oracle(data, kind, 3, lam), abs=1e-6)


def test_toy_decouples_to_zero():
    data = PostFeatures(["AA", "AA", "C"], [0, 1, 2], [[0, 0, 0, 0], [1, 0, 0, 1], [0, 0, 0, 1]], [0, 1, 1])
    model = fit_post(data, "subgroup-fair", lambda3=0.0)
    assert abs(model.objective) < 1e-7
    np.testing.assert_allclose(score(model, data.subgroup, data.X), data.y, atol=1e-6)


def test_interpolation_with_label_feature():
    data = random_instance(3)
    model = fit_post(data, "subgroup-fair", lambda3=0.05)
    # the label column lets every subgroup interpolate; only the penalty remains
    g = score(model, data.subgroup, data.X)
    assert np.max(np.abs(g - data.y)) < 1e-5
    assert model.objective == pytest.approx(0.05 * sum(v * v for v in model.intercept.values()), abs=1e-6)


def test_intercept_shrinks_with_lambda3():
    rows = [("AA", 2, 0, 0, 0), ("AA", 5, 1, 0, 1), ("AA", 9, 3, 1, 1), ("C", 1, 0, 1, 1), ("C", 4, 2, 0, 0),
            ("C", 7, 0, 0, 1)]
    data = features(rows)
    es = []
    for lam in (0.05, 5.0, 500.0):
        model = fit_post(data, "subgroup-fair", lambda3=lam, include_label=False)
        es.append(max(abs(v) for v in model.intercept.values()))
    assert es[0] >= es[1] >= es[2]
    assert es[2] < 1e-2


def test_objective_matches_reevaluation():
    data = random_instance(9)
    for kind in ("subgroup-fair", "instant-fair"):
        model = fit_post(data, kind, 0.05, include_label=False)
        assert model.objective == objective_value(model, data)
        assert model.solver_stats["status"] == "Optimal"
        assert abs(model.solver_stats["objective"] - model.objective) <= 1e-7 * max(1.0, model.objective)


def test_cross_objective_optimality():
    data = random_instance(4)
    sf = fit_post(data, "subgroup-fair", 0.0, include_label=False)
    inst = fit_post(data, "instant-fair", 0.0, include_label=False)
    swap = PostModel(inst.coef, inst.intercept, 0.0, ObjectiveKind.SUBGROUP_FAIR, include_label=False)
    assert sf.objective <= objective_value(swap, data) + 1e-7
    swap = PostModel(sf.coef, sf.intercept, 0.0, ObjectiveKind.INSTANT_FAIR, include_label=False)
    assert inst.objective <= objective_value(swap, data) + 1e-7


def test_degenerate_conflicting_rows_solve():
    data = PostFeatures(["AA", "AA", "C"], [0, 1, 2], [[1, 0, 0, 0], [1, 0, 0, 0], [2, 0, 0, 0]], [0, 1, 1])
    model = fit_post(data, "subgroup-fair", 0.0, include_label=False)
    assert model.objective == pytest.approx(0.5, abs=1e-6)


def test_unfair_kind_and_negative_lambda_rejected():
    data = random_instance(0)
    with pytest.raises(ValueError):
        fit_post(data, "unfair")
    with pytest.raises(ValueError):
        fit_post(data, "subgroup-fair", lambda3=-1)


def test_score_examples():
    model = PostModel({"AA": np.zeros(4)}, {"AA": 0.5}, 0.0, ObjectiveKind.SUBGROUP_FAIR)
    np.testing.assert_allclose(score(model, ["AA", "AA"], np.ones((2, 4))), [0.5, 0.5])
    model = PostModel({"AA": np.array([1.0, 2.0, 3.0, 4.0])}, {"AA": -1.0}, 0.0, ObjectiveKind.SUBGROUP_FAIR)
    assert score(model, ["AA"], [[1, 1, 1, 1]])[0] == 9.0
    with pytest.raises(ValueError):
        score(model, ["C"], [[0, 0, 0, 0]])


def test_classify_boundaries_and_base_rates():
    g = np.array([0.2, 0.4, 0.6, 0.8])
    assert classify(g, 0.0).tolist() == [1, 1, 1, 1]
    assert classify(g, 1.0).tolist() == [0, 0, 0, 0]
    sub = np.array(["A", "A", "B", "B", "A", "B"])
    g = np.array([0.1, 0.9, 0.3, 0.7, 0.5, 0.2])
    y = np.array([0, 1, 1, 1, 1, 0])
    data = LabeledScores(sub, g, y)
    th = race_wise_thresholds(data)
    pred = classify(g, th, sub)
    assert np.array_equal(pred, apply_thresholds(data, th))
    for grp, rate in base_rates(data).items():
        assert pred[sub == grp].mean() == pytest.approx(rate)


def test_scores_csv(tmp_path):
    path = tmp_path / "s.csv"
    text = write_scores_csv(path, ["AA"], ["7"], [0.25], [1], [0], header_lines=["h"])
    assert text == "# h\nsubgroup,id,score,label,prediction\nAA,7,0.25,1,0\n"
    assert path.read_text() == text


def test_features_round_trip(tmp_path):
    data = random_instance(2)
    path = tmp_path / "f.csv"
    data.to_frame().to_csv(path, index=False)
    back = PostFeatures.read_csv(path)
    np.testing.assert_array_equal(back.X, data.X)
    assert back.subgroup.tolist() == data.subgroup.tolist()


def test_estimator_api():
    data = random_instance(5)
    est = MinMaxPostProcessor(lambda3=0.05, include_label=False).fit(data.X, data.y, data.subgroup)
    assert est.predict(data.X, data.subgroup).shape == (6,)
    assert est.objective_ == pytest.approx(est.model_.objective)
    assert sorted(est.groups_) == ["AA", "C"]
    assert est.get_params()["lambda3"] == 0.05
