"""Strict config parsing, CLI orchestration and output determinism."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from shuttlesim.cli import main
from shuttlesim.config import (ConfigError, DEFAULT_CONFIG, RunConfig, config_to_text,
                               load_config, parse_config_text)

SMALL = """
# compact run for tests
run = evolve
dim = 8
gamma = 1.0
t_max = 1.0
dt = 0.005
record_stride = 5
n_traj = 3
master_seed = 11
"""


def test_minimal_file_gets_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("run = steady\n")
    cfg = load_config(path)
    assert cfg.run == "steady"
    assert cfg.dim == DEFAULT_CONFIG.dim
    assert cfg.kappa == 0.05
    assert cfg.dt == pytest.approx(math.pi / 1000)


def test_negative_rate_names_field():
    with pytest.raises(ConfigError, match="gamma"):
        parse_config_text("run = evolve\ngamma = -1\n")


def test_duplicate_key_names_both_lines():
    text = "run = evolve\ndim = 8\ndim = 12\n"
    with pytest.raises(ConfigError, match=r"3.*duplicate key 'dim'.*line 2"):
        parse_config_text(text)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="frequency"):
        parse_config_text("frequency = 2\n")


def test_malformed_line_reports_number():
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("run = evolve\nthis is not a key value\n")


def test_bad_value_type():
    with pytest.raises(ConfigError, match="dim"):
        parse_config_text("dim = forty\n")


def test_run_kind_validated():
    with pytest.raises(ConfigError, match="run"):
        parse_config_text("run = dance\n")


def test_comments_and_blanks_ignored():
    cfg = parse_config_text("# top\n\nrun = power   # tail comment\n")
    assert cfg.run == "power"


def test_sweep_validation():
    with pytest.raises(ConfigError):
        parse_config_text("run = sweep\nsweep_param = output_dir\n")
    cfg = parse_config_text("run = sweep\nsweep_param = gamma\n"
                            "sweep_values = 0, 1.5, 3\nsweep_run = steady\n")
    assert cfg.sweep_values == (0.0, 1.5, 3.0)


def test_config_text_roundtrip():
    cfg = RunConfig(run="spectrum", gamma=3.25, sweep_values=(0.5, 1.5))
    back = parse_config_text(config_to_text(cfg))
    assert back == cfg


def _write(tmp_path, text=SMALL):
    p = tmp_path / "small.cfg"
    p.write_text(text)
    return p


def test_cli_evolve_outputs(tmp_path):
    cfg = _write(tmp_path)
    out = tmp_path / "out"
    assert main(["evolve", "--config", str(cfg), "--out", str(out), "--no-plots"]) == 0
    data = np.genfromtxt(out / "timeseries.csv", delimiter=",", names=True)
    assert list(data.dtype.names) == ["t", "x_mean", "v_mean", "n_phonon", "n_electron",
                                      "trace", "q_dot_hot", "q_dot_cold",
                                      "e_dot_control", "e_dot_total"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["run"] == "evolve"
    assert "timeseries.csv" in manifest["files"]
    # the manifest echo round-trips to the effective config
    echoed = parse_config_text(manifest["config_echo"])
    assert echoed.dim == 8 and echoed.run == "evolve"


def test_cli_flag_overrides(tmp_path):
    cfg = _write(tmp_path)
    out = tmp_path / "out2"
    assert main(["evolve", "--config", str(cfg), "--out", str(out), "--dim", "6",
                 "--tmax", "0.5", "--no-plots"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["dim"] == 6
    assert manifest["config"]["t_max"] == 0.5


def test_cli_error_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("gamma = -3\n")
    assert main(["evolve", "--config", str(bad)]) == 2


def test_cli_failed_marker(tmp_path):
    cfg = _write(tmp_path, SMALL + "eta = 3.0\n")   # drain rate unstable at this dt
    out = tmp_path / "boom"
    assert main(["trajectories", "--config", str(cfg), "--out", str(out),
                 "--no-plots"]) == 1
    assert (out / "FAILED.marker").exists()


def test_byte_identical_reruns(tmp_path):
    cfg = _write(tmp_path, SMALL.replace("run = evolve", "run = trajectories"))
    out = tmp_path / "r1"
    assert main(["trajectories", "--config", str(cfg), "--out", str(out),
                 "--no-plots"]) == 0
    names = sorted(p.name for p in out.iterdir() if p.suffix in (".csv", ".json"))
    assert "traj_0000.csv" in names and "ensemble_summary.csv" in names
    first = {name: (out / name).read_bytes() for name in names}
    assert main(["trajectories", "--config", str(cfg), "--out", str(out),
                 "--no-plots"]) == 0
    for name in names:
        assert (out / name).read_bytes() == first[name], name


def test_sweep_outputs(tmp_path):
    text = SMALL.replace("run = evolve", "run = sweep") + (
        "model = fixed_charge\nsweep_param = gamma\nsweep_values = 0.1,0.3\n"
        "sweep_run = steady\n")
    cfg = _write(tmp_path, text)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--no-plots"]) == 0
    rows = (out / "sweep_summary.csv").read_text().strip().splitlines()
    assert rows[0].startswith("gamma,")
    assert len(rows) == 3
    assert (out / "gamma_0.1" / "steady.json").exists()


def test_sweep_order_independence(tmp_path):
    base = SMALL.replace("run = evolve", "run = sweep") + (
        "model = fixed_charge\nsweep_param = gamma\nsweep_run = steady\n")
    cfg_a = _write(tmp_path, base + "sweep_values = 0.1,0.3\n")
    out_a = tmp_path / "a"
    main(["sweep", "--config", str(cfg_a), "--out", str(out_a), "--no-plots"])
    cfg_b = tmp_path / "b.cfg"
    cfg_b.write_text(base + "sweep_values = 0.3,0.1\n")
    out_b = tmp_path / "b"
    main(["sweep", "--config", str(cfg_b), "--out", str(out_b), "--no-plots"])
    for point in ("gamma_0.1", "gamma_0.3"):
        assert (out_a / point / "steady.json").read_bytes() == \
               (out_b / point / "steady.json").read_bytes()


def test_check_operators_subcommand(tmp_path, capsys):
    out = tmp_path / "ops"
    assert main(["check-operators", "--dim", "12", "--dump", "X",
                 "--out", str(out)]) == 0
    captured = capsys.readouterr().out
    assert "[X,P]-iI" in captured
    data = np.genfromtxt(out / "operator_X.csv", delimiter=",", names=True)
    assert list(data.dtype.names) == ["row", "col", "re", "im"]
    assert data.shape[0] == 144


def test_cli_plots_rendered(tmp_path):
    cfg = _write(tmp_path)
    out = tmp_path / "withplots"
    assert main(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "timeseries.png").stat().st_size > 1000
