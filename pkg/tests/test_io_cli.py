import json

import numpy as np
import pytest
import yaml

from smibdse.cli import main
from smibdse.exceptions import IoError
from smibdse.harness import ScenarioTrace, simulate
from smibdse.io import export_trace, read_trace, trace_header, write_json

HEADER = ("t,x1_true,x2_true,x3_true,x4_true,y_clean,y_attacked,"
          + ",".join(f"{f}_x1,{f}_x2,{f}_x3,{f}_x4,{f}_g,{f}_d,{f}_chi2_alarm,{f}_euclid_alarm"
                     for f in ("ekf", "ckf", "sckf")))


def test_header_layout():
    assert ",".join(trace_header()) == HEADER


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_round_trip(short_config, tmp_path, fmt):
    trace = simulate(short_config)
    path = export_trace(trace, tmp_path / f"trace.{fmt}", fmt=fmt)
    back = read_trace(path)
    np.testing.assert_allclose(back.t, trace.t, rtol=1e-12, atol=0)
    np.testing.assert_allclose(back.x_true, trace.x_true, rtol=1e-12, atol=0)
    np.testing.assert_allclose(back.y_attacked, trace.y_attacked, rtol=1e-12, atol=0)
    for name in trace.filters:
        np.testing.assert_allclose(back.estimates[name], trace.estimates[name], rtol=1e-12, atol=0)
        np.testing.assert_allclose(back.g[name], trace.g[name], rtol=1e-12, atol=0)
        np.testing.assert_array_equal(back.euclid_alarm[name], trace.euclid_alarm[name])


def test_empty_trace_writes_header_only(tmp_path):
    trace = ScenarioTrace(np.empty(0), np.empty((0, 4)), np.empty(0), np.empty(0), np.empty(0))
    for name in ("ekf", "ckf", "sckf"):
        trace.estimates[name] = np.empty((0, 4))
    path = export_trace(trace, tmp_path / "empty.csv")
    assert path.read_text() == HEADER + "\n"
    assert len(read_trace(path)) == 0


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        write_json({"a": 1}, blocker / "sub" / "m.json")
    assert not list(tmp_path.glob(".*"))


def test_failed_write_leaves_no_partial_file(tmp_path):
    with pytest.raises(TypeError):
        write_json({"a": object()}, tmp_path / "m.json")
    assert list(tmp_path.iterdir()) == []


def test_cli_run_writes_outputs(write_config, short_config_dict, tmp_path, capsys):
    cfg = write_config(short_config_dict)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    assert (out / "trace.csv").read_text().splitlines()[0] == HEADER
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["seed"] == 4
    echoed = yaml.safe_load((out / "config.yaml").read_text())
    assert echoed["seed"] == 4 and echoed["horizon"] == 0.5


def test_cli_runs_are_byte_identical(write_config, short_config_dict, tmp_path):
    cfg = write_config(short_config_dict)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a/trace.csv").read_bytes() == (tmp_path / "b/trace.csv").read_bytes()


def test_flag_beats_environment(write_config, short_config_dict, tmp_path, monkeypatch):
    cfg = write_config(short_config_dict)
    monkeypatch.setenv("SMIBDSE_SEED", "9")
    monkeypatch.setenv("SMIBDSE_FILTERS", "ekf")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 0
    echoed = yaml.safe_load((tmp_path / "e/config.yaml").read_text())
    assert echoed["seed"] == 9 and echoed["filters"] == ["ekf"]
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "f"), "--seed", "2"]) == 0
    assert yaml.safe_load((tmp_path / "f/config.yaml").read_text())["seed"] == 2


def test_batch_with_one_run_matches_run(write_config, short_config_dict, tmp_path):
    cfg = write_config(short_config_dict)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert main(["batch", "--config", str(cfg), "--out", str(tmp_path / "b"),
                 "--runs", "1", "--workers", "1"]) == 0
    single = json.loads((tmp_path / "r/metrics.json").read_text())
    summary = json.loads((tmp_path / "b/summary.json").read_text())
    assert summary["runs"] == [single]


def test_config_error_exit_code(write_config, short_config_dict, tmp_path, capsys):
    short_config_dict["detector"]["euclid_windw"] = 3
    cfg = write_config(short_config_dict)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "euclid_windw" in capsys.readouterr().err
    assert main(["run", "--preset", "nope"]) == 2


def test_numerical_failure_exit_code(write_config, short_config_dict, tmp_path, capsys):
    short_config_dict["initial"]["x_true"] = [0.4, 1e308, 0, 0]
    cfg = write_config(short_config_dict)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "step" in capsys.readouterr().err


def test_calibrate(write_config, short_config_dict, tmp_path):
    short_config_dict["horizon"] = 0.2
    cfg = write_config(short_config_dict)
    out = tmp_path / "cal"
    assert main(["calibrate", "--config", str(cfg), "--out", str(out), "--runs", "20",
                 "--filters", "ekf"]) == 0
    text = (out / "detector.yaml").read_text()
    assert text.startswith("# calibrated from scenario1: 20 attack-free runs")
    thr = yaml.safe_load(text)["detector"]["euclid_threshold"]
    from smibdse.config import load_config, apply_overrides
    base = apply_overrides(load_config(cfg), filters="ekf")
    peak = max(np.nanmax(simulate(base.with_seed(base.run_seed(i))).d["ekf"]) for i in range(20))
    assert thr > peak


def test_calibrate_refuses_attack(tmp_path, capsys):
    assert main(["calibrate", "--preset", "scenario4-dos", "--out", str(tmp_path)]) == 2
    assert "attack-free" in capsys.readouterr().err


def test_plot(write_config, short_config_dict, tmp_path, capsys):
    cfg = write_config(short_config_dict)
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["plot", str(out / "trace.csv"), "--channels", "x1,e1,y,g,d",
                 "--out", str(out / "f.svg")]) == 0
    assert (out / "f.svg").read_text().lstrip().startswith("<?xml")
    assert main(["plot", str(out / "trace.csv"), "--channels", ""]) == 0
    assert (out / "trace.svg").exists()
    assert main(["plot", str(out / "trace.csv"), "--channels", "x9"]) == 2
    err = capsys.readouterr().err
    assert "x9" in err and "x1, x2" in err


def test_plot_missing_trace(tmp_path):
    assert main(["plot", str(tmp_path / "none.csv")]) == 1


def test_list_presets(capsys):
    assert main(["list-presets"]) == 0
    assert "scenario5-fdi" in capsys.readouterr().out.split()


def test_seed_flag_changes_trace(write_config, short_config_dict, tmp_path):
    cfg = write_config(short_config_dict)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "1"])
    assert (tmp_path / "a/trace.csv").read_bytes() != (tmp_path / "b/trace.csv").read_bytes()


def test_missing_required_key_is_named(write_config, short_config_dict, capsys):
    del short_config_dict["inputs"]
    assert main(["run", "--config", str(write_config(short_config_dict))]) == 2
    assert "inputs" in capsys.readouterr().err


def test_batch_summary_has_intervals(write_config, short_config_dict, tmp_path):
    cfg = write_config(short_config_dict)
    assert main(["batch", "--config", str(cfg), "--out", str(tmp_path), "--runs", "3"]) == 0
    ci = json.loads((tmp_path / "summary.json").read_text())["aggregate"]["ckf"]["mean_error_norm"]
    assert set(ci) == {"mean", "ci_low", "ci_high", "n"} and ci["n"] == 3


def test_jsonl_run(write_config, short_config_dict, tmp_path):
    cfg = write_config(short_config_dict)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path), "--format", "jsonl"]) == 0
    first = json.loads((tmp_path / "trace.jsonl").read_text().splitlines()[0])
    assert list(first) == HEADER.split(",") and first["ekf_g"] is None
