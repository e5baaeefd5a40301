import csv
import json
import subprocess

import pytest


def run(cli, *args, expect=0):
    proc = subprocess.run([cli, *map(str, args)], capture_output=True, text=True)
    assert proc.returncode == expect, proc.stderr
    return proc


@pytest.fixture(scope="module")
def workflow(cli, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run(cli, "simulate", "--model", "tt", "--n", 200, "--seed", 4, "--split", "--out", data)
    fit = root / "fit"
    run(cli, "fit", "--model", "nn", "--long", data / "learn_long.csv", "--surv", data / "learn_surv.csv",
        "--survival-covariates", "group", "--chains", 2, "--iter", 500, "--seed", 3, "--allow-unconverged", "true",
        "--out", fit)
    return root, data, fit


def test_simulate_writes_cohort_and_truth(workflow):
    _, data, _ = workflow
    truth = json.loads((data / "truth.json").read_text())
    assert truth["regime"] == "tt" and truth["n"] == 200
    with open(data / "surv.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 200 and set(rows[0]) == {"id", "event_time", "event", "group"}
    with open(data / "learn_surv.csv") as a, open(data / "valid_surv.csv") as b:
        assert len(list(csv.DictReader(a))) + len(list(csv.DictReader(b))) == 200


def test_fit_outputs(workflow):
    _, _, fit = workflow
    meta = json.loads((fit / "fit.json").read_text())
    assert meta["chains"] == 2 and meta["retained_draws"] == 500
    assert (fit / "draws_chain1.csv").exists() and (fit / "design_audit.csv").exists()


def test_validate_writes_metrics(cli, workflow):
    root, data, fit = workflow
    out = root / "val"
    run(cli, "validate", "--fit", fit, "--long", data / "valid_long.csv", "--surv", data / "valid_surv.csv",
        "--landmarks", "1,3", "--horizon", 5, "--thin", 10, "--out", out)
    with open(out / "metrics.csv") as f:
        rows = list(csv.DictReader(f))
    metrics = {(r["landmark"], r["metric"]) for r in rows}
    assert ("1", "auc") in metrics and ("3", "brier") in metrics
    for r in rows:
        if r["metric"] == "auc" and r["p50"] != "NA":
            assert 0.0 <= float(r["p50"]) <= 1.0
    assert (out / "calibration.csv").exists()


def test_predict_excludes_subjects_not_at_risk(cli, workflow):
    root, data, fit = workflow
    out = root / "pred"
    proc = run(cli, "predict", "--fit", fit, "--long", data / "valid_long.csv", "--surv", data / "valid_surv.csv",
               "--landmarks", 4, "--horizon", "1,3", "--thin", 10, "--out", out)
    with open(data / "valid_surv.csv") as f:
        gone = [r["id"] for r in csv.DictReader(f) if float(r["event_time"]) <= 4]
    assert gone
    assert all(f"{g} not at risk" in proc.stderr for g in gone)
    bodies = json.loads((out / "predictions.json").read_text())
    assert not {b["id"] for b in bodies} & set(gone)
    with open(out / "predictions_summary.csv") as f:
        assert len(list(csv.DictReader(f))) == 2 * len(bodies)


def test_diagnose_writes_rhat_table(cli, workflow):
    root, data, fit = workflow
    out = root / "diag"
    run(cli, "diagnose", "--fit", fit, "--long", data / "learn_long.csv", "--surv", data / "learn_surv.csv",
        "--out", out)
    with open(out / "rhat.csv") as f:
        names = [r["parameter"] for r in csv.DictReader(f)]
    assert "alpha[2]" in names and "sigma" in names
    assert (out / "qq.csv").exists()


def test_invalid_input_exits_with_validation_code(cli, tmp_path):
    long_csv = tmp_path / "long.csv"
    surv_csv = tmp_path / "surv.csv"
    long_csv.write_text("id,time,value\nA,0,0.1\nA,1,abc\n")
    surv_csv.write_text("id,event_time,event\nA,2,1\n")
    proc = run(cli, "fit", "--long", long_csv, "--surv", surv_csv, "--out", tmp_path / "fit", expect=2)
    assert "long.csv" in proc.stderr
    run(cli, "fit", "--chains", "x", expect=2)
    run(cli, "simulate", "--model", "zz", "--out", tmp_path / "sim", expect=2)


def test_unconverged_fit_exits_with_convergence_code(cli, workflow, tmp_path):
    _, data, _ = workflow
    run(cli, "fit", "--model", "tt", "--long", data / "learn_long.csv", "--surv", data / "learn_surv.csv",
        "--chains", 2, "--iter", 20, "--seed", 1, "--out", tmp_path / "fit", expect=3)
