import csv
import json
import subprocess
import sys

import pytest

from canls.cli import DEFAULT_CONFIG, ConfigError, main, parse_config, resolve_config, run_command

FAST = {"trials": 5, "detector": {"detectors": ["ca-nls", "sglrtc"]},
        "sweep": {"values": [6.0, 9.0, 12.0]}}


def _write(path, text):
    path.write_text(text)
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_empty_config_gives_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path / "c.yaml", ""))
    assert cfg["geometry"]["n_passes"] == 20
    assert cfg["geometry"]["grid_size"] == 234
    assert cfg["detector"]["threshold"] == 0.8
    assert cfg["detector"]["k_max"] == 2
    assert resolve_config(None) == cfg


def test_layover_override(tmp_path):
    cfg = parse_config(_write(tmp_path / "c.yaml", "geometry:\n  n_passes: 24\nscenario:\n  snr_db: 9\n"))
    assert cfg["geometry"]["n_passes"] == 24 and cfg["scenario"]["snr_db"] == 9.0
    assert cfg["stack"]["n_passes"] == 24


@pytest.mark.parametrize("data, field", [
    ({"geometry": {"n_passes": 1}}, "geometry.n_passes"),
    ({"geometry": {"grid_size": 1}}, "geometry.grid_size"),
    ({"geometry": {"oops": 1}}, "geometry.oops"),
    ({"detector": {"penalty": "HQ"}}, "detector.penalty"),
    ({"detector": {"penalty": "AICc", "k_max": 7}}, "detector.k_max"),
    ({"trials": 2.5}, "trials"),
    ({"sweep": {"values": []}}, "sweep.values"),
    ({"calibration": {"p_fa": 0.9}}, "calibration.p_fa"),
])
def test_invalid_fields_named(data, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        resolve_config(data)


def test_n_passes_rejection_message():
    with pytest.raises(ConfigError) as exc:
        resolve_config({"geometry": {"n_passes": 1}})
    assert "geometry.n_passes" in str(exc.value) and ">= 2" in str(exc.value)


def test_parse_error_reports_line(tmp_path, capsys):
    path = _write(tmp_path / "bad.yaml", "geometry:\n  n_passes: [1, 2\n")
    code = main(["pd-sweep", "--config", path, "--out", str(tmp_path / "o")])
    assert code == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["status"] == "error" and "line" in rec["message"]


def test_pd_sweep_rows_and_determinism(tmp_path):
    cfg = resolve_config(FAST)
    run_command("pd-sweep", cfg, tmp_path / "a")
    run_command("pd-sweep", cfg, tmp_path / "b")
    rows = _rows(tmp_path / "a" / "results.csv")
    assert rows[0][0] == "detector"
    assert len(rows) - 1 == 6
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert (tmp_path / "a" / "plot.gp").exists()


def test_manifest_rerun(tmp_path):
    assert main(["rmse-sweep", "--config", _write(tmp_path / "c.yaml", json.dumps(FAST)),
                 "--out", str(tmp_path / "a"), "--seed", "17"]) == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 17 and man["csv_columns"][0] == "detector"
    assert main(["rmse-sweep", "--config", str(tmp_path / "a" / "manifest.json"),
                 "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_threads_do_not_change_output(tmp_path, monkeypatch):
    path = _write(tmp_path / "c.yaml", json.dumps(FAST))
    main(["pd-sweep", "--config", path, "--out", str(tmp_path / "a")])
    monkeypatch.setenv("CANLS_THREADS", "3")
    main(["pd-sweep", "--config", path, "--out", str(tmp_path / "b")])
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man["config"]["threads"] == 3
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_penalty_compare_rows(tmp_path):
    cfg = resolve_config({"trials": 2, "penalty": {"snr_values": [9.0]}})
    run_command("penalty-compare", cfg, tmp_path)
    assert len(_rows(tmp_path / "results.csv")) - 1 == 6


def test_layover_and_reconstruct(tmp_path):
    cfg = resolve_config({"layover": {"n_pixels": 4, "dphi_modes": ["zero"]},
                          "stack": {"threshold": 0.8},
                          "scene": {"n_azimuth": 1, "n_double": 2, "n_triple": 1,
                                    "detectors": ["ca-nls"], "rules": ["AICc"]}})
    run_command("layover", cfg, tmp_path / "l")
    assert (tmp_path / "l" / "pixels.csv").exists()
    run_command("reconstruct", cfg, tmp_path / "r")
    assert len(_rows(tmp_path / "r" / "results.csv")) == 2


def test_calibrate_small(tmp_path, capsys):
    cfg = resolve_config({"geometry": {"grid_size": 40},
                          "calibration": {"p_fa": 0.01, "trials": 2000, "check_trials": 1000}})
    run_command("calibrate-threshold", cfg, tmp_path)
    out = json.loads((tmp_path / "threshold.json").read_text())
    assert out["threshold"] > 0 and 0 <= out["measured_p_fa"] <= 1
    assert "T = " in capsys.readouterr().out


def test_runtime_error_exit_code(tmp_path, capsys):
    code = main(["calibrate-threshold", "--out", str(tmp_path), "--trials", "20"])
    assert code == 1
    assert json.loads((tmp_path / "error.json").read_text())["exit_code"] == 1


def test_timing_records_elapsed(tmp_path):
    cfg = resolve_config({"timing": {"grid_sizes": [50], "trials": 1, "detectors": ["sglrtc"]}})
    run_command("timing", cfg, tmp_path)
    rows = _rows(tmp_path / "results.csv")
    assert rows[1][rows[0].index("mean_elapsed_s")] != ""


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "canls.cli", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "canls" in res.stdout


def test_default_config_is_not_mutated():
    before = json.dumps(DEFAULT_CONFIG, sort_keys=True)
    resolve_config({"geometry": {"n_passes": 30}})
    assert json.dumps(DEFAULT_CONFIG, sort_keys=True) == before
