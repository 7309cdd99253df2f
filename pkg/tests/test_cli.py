import csv
import json
import logging
import shutil
import subprocess

import numpy as np
import pytest

from shipems.cli import main
from shipems.forecast import ForecastRequest, GbtHyper, gbt_fit, read_frames, split_frames
from shipems.forecast.frame import HEADER
from shipems.sim import generate_synthetic_mission

SMALL_FORECASTER = "forecaster:\n  train_missions: 3\n  train_hours: 0.75\n  delta_plus: 300\n"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    return json.loads(err.strip().splitlines()[-1])


def test_simulate_writes_three_files(tmp_path, capsys):
    code, out, _ = run(["simulate", "--out", tmp_path, "--strategy", "ecms"], capsys)
    assert code == 0
    data = json.loads((tmp_path / "result.json").read_text())
    assert data["metrics"]["strategy"] == "ecms"
    rows = list(csv.reader((tmp_path / "trace.csv").open()))
    assert len(rows) == 3601
    assert (tmp_path / "trajectory.svg").read_text().lstrip().startswith("<?xml")
    assert json.loads(out)["h2_kg"] == data["metrics"]["h2_kg"]


def test_simulate_is_reproducible(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(["simulate", "--out", tmp_path / d, "--generator", "synthetic", "--hours", 0.5,
                    "--seed", 4, "--strategy", "mpc-perfect"], capsys)[0] == 0
    a, b = (json.loads((tmp_path / d / "result.json").read_text()) for d in "ab")
    a.pop("run_info"), b.pop("run_info")
    assert a == b
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    assert (tmp_path / "a" / "trajectory.svg").read_bytes() == (tmp_path / "b" / "trajectory.svg").read_bytes()


def test_missing_config_is_input_error(tmp_path, capsys):
    code, _, err = run(["simulate", "--out", tmp_path, "--config", tmp_path / "none.yaml"], capsys)
    assert code == 2
    assert error_of(err)["exit_code"] == 2


def test_bad_config_is_input_error(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("plant:\n  nonsense: 1\n")
    code, _, err = run(["simulate", "--out", tmp_path, "--config", tmp_path / "c.yaml"], capsys)
    assert code == 2 and "unknown keys" in error_of(err)["message"]


def test_empty_corpus_is_input_error(tmp_path, capsys):
    (tmp_path / "corpus").mkdir()
    for cmd in ("sweep", "horizon"):
        code, _, err = run([cmd, "--corpus", tmp_path / "corpus", "--out", tmp_path / cmd], capsys)
        assert code == 2
        assert "no mission CSV" in error_of(err)["message"]


def test_gen_files(tmp_path, capsys):
    assert run(["gen", "--seeds", 1, 2, 3, "--hours", 0.25, "--out", tmp_path / "a"], capsys)[0] == 0
    assert run(["gen", "--seeds", 1, "--hours", 0.25, "--out", tmp_path / "b"], capsys)[0] == 0
    files = sorted((tmp_path / "a").glob("*.csv"))
    assert len(files) == 3 and len({f.read_bytes() for f in files}) == 3
    assert files[0].read_bytes() == (tmp_path / "b" / files[0].name).read_bytes()
    assert files[0].read_text().splitlines()[0] == ",".join(HEADER)


def test_generated_csv_ingests_without_warnings(tmp_path, capsys, caplog):
    run(["gen", "--seed", 8, "--count", 1, "--hours", 0.5, "--out", tmp_path], capsys)
    with caplog.at_level(logging.WARNING):
        (frame,) = read_frames(next(tmp_path.glob("*.csv")))
    assert not caplog.records
    assert len(frame) == 360


@pytest.fixture(scope="module")
def one_mission_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    generate_synthetic_mission(21, 1800.0).to_csv(d / "m21.csv")
    return d


def test_sweep_on_one_mission_equals_simulate(tmp_path, capsys, one_mission_corpus):
    code, _, _ = run(["sweep", "--corpus", one_mission_corpus, "--strategy", "ecms", "--aging", "eol",
                      "--jobs", 1, "--out", tmp_path / "sw"], capsys)
    assert code == 0
    (agg,) = list(csv.DictReader((tmp_path / "sw" / "aggregates.csv").open()))
    run(["simulate", "--mission", one_mission_corpus / "m21.csv", "--strategy", "ecms", "--aging", "eol",
         "--out", tmp_path / "sim"], capsys)
    metrics = json.loads((tmp_path / "sim" / "result.json").read_text())["metrics"]
    assert float(agg["deg_uv"]) == metrics["deg_uv"]
    assert float(agg["h2_t"]) == pytest.approx(metrics["h2_kg"] / 1000.0, rel=1e-15)
    for name in ("missions.csv", "pareto.svg", "report.json"):
        assert (tmp_path / "sw" / name).exists()


def test_sweep_covers_all_strategies(tmp_path, capsys, one_mission_corpus):
    (tmp_path / "c.yaml").write_text(SMALL_FORECASTER)
    code, _, _ = run(["sweep", "--corpus", one_mission_corpus, "--config", tmp_path / "c.yaml", "--aging", "bol",
                      "--jobs", 1, "--out", tmp_path], capsys)
    assert code == 0
    names = {r["strategy"] for r in csv.DictReader((tmp_path / "aggregates.csv").open())}
    assert names == {"filter60", "filter600", "ecms", "mpc-perfect", "mpc-data"}


def test_horizon_command(tmp_path, capsys, one_mission_corpus):
    code, out, _ = run(["horizon", "--corpus", one_mission_corpus, "--horizons", 15, 30, "--jobs", 1,
                        "--out", tmp_path], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "horizon.csv").open()))
    assert [float(r["horizon_min"]) for r in rows] == [15.0, 30.0]
    assert (tmp_path / "horizon.svg").exists()


def test_forecast_eval_with_perfect_external(tmp_path, capsys):
    m = generate_synthetic_mission(40, 3 * 3600.0)
    m.to_csv(tmp_path / "frame.csv")
    with open(tmp_path / "ext.csv", "w") as fh:
        fh.write("t_s,p_tot_kw\n")
        for t, p in zip(m.t, m.p_load):
            fh.write(f"{float(t)!r},{float(p)!r}\n")
    (frame,) = read_frames(tmp_path / "frame.csv")
    tr, va, _ = split_frames([frame])
    fast = GbtHyper(learning_rate=0.3, max_depth=3, max_trees=40, early_stopping=5)
    gbt_fit(tr, va, [fast], ForecastRequest(delta_plus=60)).save(tmp_path / "model.json")
    code, _, _ = run(["forecast", "eval", "--frame", tmp_path / "frame.csv", "--model", tmp_path / "model.json",
                      "--external", tmp_path / "ext.csv", "--stride", 12, "--out", tmp_path / "ev"], capsys)
    assert code == 0
    report = json.loads((tmp_path / "ev" / "metrics.json").read_text())
    assert set(report["metrics"]["gbt"]) == {"5s", "60s", "900s", "1800s"}
    for lead, metrics in report["metrics"]["external"].items():
        assert metrics["mae"] == 0.0, lead
    assert set(report["metrics"]["gbt"]["60s"]) >= {"mae", "mape", "ppmcc"}
    for lead in (5, 60, 900):
        assert (tmp_path / "ev" / f"overlay_{lead}s.svg").exists()


def test_forecast_train_reports_audit(tmp_path, capsys):
    d = tmp_path / "frames"
    d.mkdir()
    for s in range(5):
        generate_synthetic_mission(60 + s, 2400.0).to_csv(d / f"f{s}.csv")
    (tmp_path / "c.yaml").write_text("forecaster:\n  delta_plus: 60\n")
    code, _, _ = run(["forecast", "train", "--frame", d, "--config", tmp_path / "c.yaml", "--stride", 30,
                      "--out", tmp_path / "tr"], capsys)
    assert code == 0
    report = json.loads((tmp_path / "tr" / "metrics.json").read_text())
    assert report["split"]["train"] == 3 and report["split"]["test"] == 1
    assert report["leakage_audit"]["ok"]
    assert (tmp_path / "tr" / "model.json").exists()


def test_malformed_external_is_input_error(tmp_path, capsys):
    generate_synthetic_mission(3, 3600.0).to_csv(tmp_path / "f.csv")
    (tmp_path / "e.csv").write_text("t_s,p_tot_kw\n0,abc\n")
    code, _, _ = run(["forecast", "eval", "--frame", tmp_path / "f.csv", "--model", tmp_path / "m.json",
                      "--external", tmp_path / "e.csv", "--out", tmp_path / "o"], capsys)
    assert code == 2


def test_forecast_eval_needs_model(tmp_path, capsys):
    generate_synthetic_mission(3, 3600.0).to_csv(tmp_path / "f.csv")
    code, _, err = run(["forecast", "eval", "--frame", tmp_path / "f.csv", "--out", tmp_path / "o"], capsys)
    assert code == 2 and "--model" in error_of(err)["message"]


def test_config_ref(tmp_path, capsys):
    assert run(["config-ref", "--out", tmp_path], capsys)[0] == 0
    ref = json.loads((tmp_path / "config_reference.json").read_text())
    assert all(r["source"] for r in ref)
    assert (tmp_path / "config.json").exists() and (tmp_path / "config_reference.md").exists()


@pytest.mark.skipif(shutil.which("shipems") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["shipems", "simulate", "--out", str(tmp_path), "--config", str(tmp_path / "x.yaml")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "file_not_found"
