import hashlib
import json
import subprocess
import sys

import pandas as pd
import pytest

from fairlds.cli import main
from fairlds.ingest import fixture_path
from fairlds.lds import Panel


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return path


def read_table(path):
    return pd.read_csv(path, comment="#", keep_default_na=False)


def test_generate_round_trip(tmp_path):
    cfg = write_json(tmp_path / "g.json", {"T": 3})
    out = tmp_path / "p.csv"
    assert main(["generate", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    text = out.read_text()
    assert text.startswith("# fairlds ") and "# seed 4\n" in text
    assert len(Panel.read_csv(out)) > 0
    assert main(["fit", "--panel", str(out), "--out", str(tmp_path / "r.json")]) == 0


def test_generate_invalid_config(tmp_path, capsys):
    cfg = write_json(tmp_path / "g.json", {"beta_d": 1.2})
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "p.csv")]) == 2
    assert "beta_d" in capsys.readouterr().err


def test_generate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["generate", "--out", str(out), "--seed", "9"]) == 0
    assert sha(a) == sha(b)


def test_fit_constant_and_zero_ten(tmp_path):
    const = tmp_path / "c.csv"
    Panel.from_records([(s, "0", t, 2.0) for s in "ad" for t in (1, 2)]).to_csv(const)
    out = tmp_path / "c.json"
    assert main(["fit", "--panel", str(const), "--lambda1", "0", "--lambda2", "0", "--out", str(out)]) == 0
    assert abs(json.loads(out.read_text())["z"]) < 1e-5

    zt = tmp_path / "zt.csv"
    Panel.from_records([("a", "0", 1, 0.0), ("d", "0", 1, 10.0)]).to_csv(zt)
    assert main(["fit", "--panel", str(zt), "--objective", "subgroup-fair", "--lambda1", "0", "--lambda2", "0",
                 "--out", str(out)]) == 0
    result = json.loads(out.read_text())
    assert list(result["forecasts"]) == ["1"]
    assert result["forecasts"]["1"] == pytest.approx(5.0, abs=1e-4)
    assert result["solver"]["status"] == "Optimal"


def test_fit_input_errors(tmp_path):
    zt = tmp_path / "zt.csv"
    Panel.from_records([("a", "0", 1, 0.0)]).to_csv(zt)
    assert main(["fit", "--panel", str(zt), "--objective", "bogus", "--out", str(tmp_path / "r.json")]) == 2
    assert main(["fit", "--panel", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "r.json")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["fit", "--panel", str(bad), "--out", str(tmp_path / "r.json")]) == 2
    assert main(["fit", "--panel", str(zt), "--loss", "sq", "--out", str(tmp_path / "r.json")]) == 2
    assert main(["nonsense"]) == 2


def test_fit_solver_failure_exit_3(tmp_path, monkeypatch):
    from fairlds import cli
    from fairlds.lds import FitError

    def boom(panel, config):
        raise FitError("forced failure")

    monkeypatch.setattr(cli, "fit", boom)
    zt = tmp_path / "zt.csv"
    Panel.from_records([("a", "0", 1, 0.0)]).to_csv(zt)
    out = tmp_path / "r.json"
    assert main(["fit", "--panel", str(zt), "--out", str(out)]) == 3
    assert json.loads(out.read_text())["error"] == "forced failure"


def test_beta_sweep_row_count(tmp_path):
    spec = write_json(tmp_path / "s.json", {
        "kind": "BetaSweep", "betas": [0.5, 0.9], "seeds": [0, 1],
        "models": ["unfair", "subgroup-fair", "instant-fair"],
        "generator": {"T": 2}, "fit": {"lambda1_by_model": {"unfair": 1, "subgroup-fair": 3, "instant-fair": 5}},
    })
    out = tmp_path / "t.csv"
    assert main(["sweep", "--spec", str(spec), "--out", str(out)]) == 0
    table = read_table(out)
    assert list(table.columns) == ["model", "beta", "seed", "T", "subgroup", "nrmse", "runtime_s", "num_vars", "status"]
    assert len(table) == 2 * 2 * 2 * 3
    assert (table["status"] == "ok").all()
    keys = list(zip(table["model"], table["beta"], table["seed"], table["subgroup"]))
    assert keys == sorted(keys)


def test_horizon_sweep_num_vars_increasing(tmp_path):
    spec = write_json(tmp_path / "s.json", {"kind": "HorizonSweep", "horizons": [2, 3, 4], "seeds": [0],
                                            "models": ["subgroup-fair"]})
    out = tmp_path / "t.csv"
    assert main(["sweep", "--spec", str(spec), "--out", str(out), "--omit-timing"]) == 0
    table = read_table(out).drop_duplicates("T")
    nv = table["num_vars"].astype(int).tolist()
    assert nv == sorted(nv) and len(set(nv)) == 3
    assert (read_table(out)["runtime_s"] == "").all()


def test_sweep_empty_grid_and_bad_spec(tmp_path):
    spec = write_json(tmp_path / "s.json", {"kind": "BetaSweep", "betas": [], "seeds": [0]})
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "t.csv")]) == 2
    spec = write_json(tmp_path / "s.json", {"kind": "Nope"})
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "t.csv")]) == 2
    spec = write_json(tmp_path / "s.json", {"kind": "SeedSweep", "fit": {"lambda9": 1}})
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "t.csv")]) == 2


def test_sweep_all_cells_fail_records_status(tmp_path):
    spec = write_json(tmp_path / "s.json", {"kind": "SeedSweep", "seeds": [0], "models": ["subgroup-fair"],
                                            "generator": {"T": 2}, "fit": {"solver": {"max_iters": 2}}})
    out = tmp_path / "t.csv"
    assert main(["sweep", "--spec", str(spec), "--out", str(out)]) == 3
    table = read_table(out)
    assert len(table) == 2 and (table["status"] == "MaxIterations").all()


def test_sweep_independent_of_worker_count(tmp_path, monkeypatch):
    spec = write_json(tmp_path / "s.json", {"kind": "SeedSweep", "seeds": [1, 0], "models": ["instant-fair", "unfair"],
                                            "generator": {"T": 2}})
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("FAIRLDS_THREADS", threads)
        out = tmp_path / f"t{threads}.csv"
        assert main(["sweep", "--spec", str(spec), "--out", str(out), "--omit-timing"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_compas_modes(tmp_path):
    assert main(["compas", "--csv", str(fixture_path()), "--mode", "cohort119", "--out", str(tmp_path / "c")]) == 0
    counts = json.loads((tmp_path / "c" / "counts.json").read_text())
    assert counts["rows"] == 14
    assert len(Panel.read_csv(tmp_path / "c" / "panel.csv")) == 11

    assert main(["compas", "--csv", str(fixture_path()), "--mode", "sample1005", "--out", str(tmp_path / "s")]) == 0
    feats = read_table(tmp_path / "s" / "features.csv")
    assert len(feats) == 26
    assert list(feats.columns) == ["subgroup", "id", "compas_score", "prior_incidents", "age_under_25", "label"]
    assert len(read_table(tmp_path / "s" / "train.csv")) == 20


def test_compas_missing_columns(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,race\n1,Caucasian\n")
    assert main(["compas", "--csv", str(bad), "--mode", "cohort119", "--out", str(tmp_path / "o")]) == 2


def balanced_tables(tmp_path):
    rows = []
    for g in ("AA", "C"):
        for i, (score, label) in enumerate([(2, 0), (3, 0), (8, 1), (7, 1), (5, 0), (6, 1), (1, 0), (9, 1)]):
            rows.append({"subgroup": g, "id": f"{g}{i}", "compas_score": score, "prior_incidents": i % 3,
                         "age_under_25": i % 2, "label": label})
    frame = pd.DataFrame(rows)
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    frame.to_csv(train, index=False)
    frame.to_csv(test, index=False)
    return train, test


def test_post_base_rate_symmetric(tmp_path):
    train, test = balanced_tables(tmp_path)
    out = tmp_path / "r.json"
    assert main(["post", "--train", str(train), "--test", str(test), "--no-label", "--out", str(out),
                 "--scores", str(tmp_path / "s.csv")]) == 0
    rep = json.loads(out.read_text())
    assert rep["indices"]["IND"] < 1e-9
    assert set(rep["thresholds"]) == {"AA", "C"}
    assert read_table(tmp_path / "s.csv").columns.tolist() == ["subgroup", "id", "score", "label", "prediction"]


def test_post_uni_threshold(tmp_path):
    train, test = balanced_tables(tmp_path)
    out = tmp_path / "r.json"
    assert main(["post", "--train", str(train), "--test", str(test), "--thresholds", "uni:50", "--out", str(out)]) == 0
    assert list(json.loads(out.read_text())["thresholds"]) == ["shared"]
    assert main(["post", "--train", str(train), "--test", str(test), "--thresholds", "uni:150", "--out", str(out)]) == 2
    assert main(["post", "--train", str(train), "--test", str(test), "--kind", "unfair", "--out", str(out)]) == 2


def test_post_compare_sweep(tmp_path):
    balanced_tables(tmp_path)
    spec = write_json(tmp_path / "s.json", {"kind": "PostCompare", "models": ["subgroup-fair", "instant-fair"],
                                            "thresholds": [20, 26.7, 80], "train": "train.csv", "test": "test.csv"})
    out = tmp_path / "t.csv"
    assert main(["sweep", "--spec", str(spec), "--out", str(out)]) == 0
    table = read_table(out)
    assert len(table) == 2 * 3 * 8
    assert list(table.columns) == ["model", "threshold", "index", "value", "status"]


def test_console_script_module():
    proc = subprocess.run([sys.executable, "-m", "fairlds.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("fairlds ")
