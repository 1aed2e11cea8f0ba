import csv
import json

import pytest

from remshift.cli import main, stable_digest


def write_config(path, text):
    path.write_text(text)
    return str(path)


SIM = """seed: 4
nu: 1.0
scenario:
  p: 6
  n: 400
fit:
  folds: 3
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_default_simulation_has_exactly_n_rows(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", "seed: 1\nscenario:\n  p: 15\n  n: 3000\n")
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "a")]) == 0
    assert len(read_csv(tmp_path / "a" / "events.csv")) == 3000
    assert len(read_csv(tmp_path / "a" / "nodes.csv")) == 15


def test_fixed_seed_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", SIM)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "events.csv").read_bytes() == (tmp_path / "b" / "events.csv").read_bytes()
    assert main(["simulate", "--config", cfg, "--seed", "5", "--out-dir", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "events.csv").read_bytes() != (tmp_path / "a" / "events.csv").read_bytes()


def test_missing_config_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main(["simulate"])
    assert err.value.code == 2
    assert "--config" in capsys.readouterr().err


def test_unreadable_config_reports_error(tmp_path, capsys):
    assert main(["fit", "--config", str(tmp_path / "absent.yaml")]) == 1
    assert "not found" in capsys.readouterr().err
    bad = write_config(tmp_path / "bad.yaml", "scenario:\n  q: 3\n")
    assert main(["simulate", "--config", bad, "--out-dir", str(tmp_path)]) == 1
    assert "unknown scenario keys" in capsys.readouterr().err


def test_simulation_fit_reports_global_coefficient(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", SIM)
    out = tmp_path / "fit"
    assert main(["fit", "--config", cfg, "--out-dir", str(out)]) == 0
    rows = {r["term"]: r for r in read_csv(out / "summary.csv")}
    assert {"sender.x", "x_sr", "rep", "wave", "g0"} <= set(rows)
    assert float(rows["wave"]["se"]) > 0
    assert (out / "curve_g0.csv").exists()
    report = json.loads((out / "fit_report.json").read_text())
    assert report["rows"] > 0 and report["converged"]
    assert main(["replay", str(out / "manifest.json")]) == 0


def test_empty_case_control_cites_dropped_count(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", SIM.replace("nu: 1.0", "nu: 1.0e9"))
    assert main(["fit", "--config", cfg, "--out-dir", str(tmp_path)]) == 1
    assert "400 uninformative events dropped" in capsys.readouterr().err


def test_shift_and_baseline_outputs(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", SIM)
    assert main(["shift", "--config", cfg, "--out-dir", str(tmp_path / "s")]) == 0
    info = json.loads((tmp_path / "s" / "sampling.json").read_text())
    assert len(read_csv(tmp_path / "s" / "case_control.csv")) == info["rows"]
    assert info["rows"] + info["dropped_uninformative"] == info["total_events"] == 400
    assert main(["baseline", "--config", cfg, "--out-dir", str(tmp_path / "b")]) == 0
    lam = json.loads((tmp_path / "b" / "lambda0.json").read_text())
    assert lam["lambda0"] > 0 and lam["se"] > 0 and lam["lambda0_anchored"] > 0
    assert len(read_csv(tmp_path / "b" / "breslow.csv")) == 400


def test_study_and_comparison_tables(tmp_path):
    cfg = write_config(tmp_path / "s.yaml", "study:\n  sweep: n\n  values: [200, 300]\n  replications: 2\n"
                                            "  seed: 3\n  folds: 3\n  scenario:\n    p: 5\n")
    out = tmp_path / "study"
    assert main(["study", "--config", cfg, "--out-dir", str(out)]) == 0
    assert len(read_csv(out / "records.csv")) == 4
    summary = read_csv(out / "summary.csv")
    assert {(r["value"], r["statistic"]) for r in summary} >= {("200", "wave"), ("300", "l2_g0")}
    assert main(["replay", str(out / "manifest.json")]) == 0

    cfg = write_config(tmp_path / "f.yaml", "compare:\n  n_grid: [100]\n  replications: 3\n  seed: 2\n")
    out = tmp_path / "cmp"
    assert main(["compare-fullik", "--config", cfg, "--out-dir", str(out)]) == 0
    assert len(read_csv(out / "fullik_summary.csv")) == 4
    assert len(read_csv(out / "fullik_estimates.csv")) == 12
    a = stable_digest(out / "fullik_summary.csv")
    assert main(["compare-fullik", "--config", cfg, "--out-dir", str(out)]) == 0
    assert stable_digest(out / "fullik_summary.csv") == a


def test_replay_detects_changed_output(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", SIM)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out-dir", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    man["stable_outputs"]["events.csv"] = "0" * 64
    (out / "manifest.json").write_text(json.dumps(man))
    assert main(["replay", str(out / "manifest.json")]) == 1
    assert "events.csv" in capsys.readouterr().err


EXPECTED_CURVES = {"g0", "temp", "prec", "tod", "dist", "rep", "rec"}


def test_bike_fit_emits_curves_and_competition(bike_run):
    code, out = bike_run
    assert code == 0
    assert {p.stem.removeprefix("curve_") for p in out.glob("curve_*.csv")} == EXPECTED_CURVES
    rows = {r["term"]: r for r in read_csv(out / "summary.csv")}
    for name in ("comp_sender", "comp_receiver"):
        assert float(rows[name]["se"]) > 0
    report = json.loads((out / "fit_report.json").read_text())
    assert report["rows_read"] == 5000
