import csv
import json

import pytest

from loopsoup.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, parse_config
from loopsoup.errors import ConfigError


def _run(tmp_path, command, config, *extra, name="out"):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(config) if not isinstance(config, str) else config)
    out = tmp_path / name
    code = main([command, "--config", str(cfg_path), "--out", str(out), *extra])
    return code, out


BASE = {"trap": {"kind": "harmonic", "d": 3}, "beta": 1.0, "chi": 0.3, "N": [64, 128], "seed": 7}


def test_thermo_outputs(tmp_path):
    code, out = _run(tmp_path, "thermo", BASE)
    assert code == EXIT_OK
    text = (out / "thermo_report.txt").read_text()
    assert "rho_w = 0.150257" in text
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "thermo" and manifest["seed"] == 7
    assert "alpha.csv" in manifest["outputs"]


def test_weights_and_partition(tmp_path):
    code, out = _run(tmp_path, "weights", BASE)
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(out / "weights_N64.csv")))
    assert len(rows) == 64
    code, out = _run(tmp_path, "partition", dict(BASE, options={"tilt": True}), name="p")
    assert code == EXIT_OK
    summary = list(csv.DictReader(open(out / "partition_summary.csv")))
    assert [int(r["N"]) for r in summary] == [64, 128]
    assert all(float(r["residual"]) < 1e-10 for r in summary)


def test_sample_is_deterministic_across_threads(tmp_path):
    cfg = dict(BASE, options={"n_samples": 40})
    code1, out1 = _run(tmp_path, "sample", cfg, "--threads", "1", name="a")
    code2, out2 = _run(tmp_path, "sample", cfg, "--threads", "3", name="b")
    assert code1 == code2 == EXIT_OK
    assert (out1 / "samples_N128.jsonl").read_text() == (out2 / "samples_N128.jsonl").read_text()
    first = json.loads((out1 / "samples_N64.jsonl").read_text().splitlines()[0])
    assert sum(first["lengths"]) == 64
    code3, out3 = _run(tmp_path, "sample", cfg, "--seed", "8", name="c")
    assert (out3 / "samples_N64.jsonl").read_text() != (out1 / "samples_N64.jsonl").read_text()


def test_manifest_rerun_reproduces(tmp_path):
    cfg = dict(BASE, options={"n_samples": 20})
    _, out = _run(tmp_path, "sample", cfg)
    again = tmp_path / "again"
    assert main(["sample", "--config", str(out / "manifest.json"), "--out", str(again)]) == EXIT_OK
    assert (again / "samples_N64.jsonl").read_text() == (out / "samples_N64.jsonl").read_text()


def test_density_matrix_command(tmp_path):
    cfg = {"trap": {"kind": "harmonic", "d": 1}, "chi": 1.0, "N": [128], "options": {"G": 64}}
    code, out = _run(tmp_path, "density-matrix", cfg)
    assert code == EXIT_OK
    row = next(csv.DictReader(open(out / "sigma_ladder.csv")))
    assert float(row["sigma"]) == pytest.approx(float(row["sigma_exact"]), rel=1e-6)
    assert float(row["trace"]) == pytest.approx(128, rel=5e-3)
    assert (out / "gamma_values.csv").exists()


def test_sweep_needs_no_regime(tmp_path):
    cfg = {"trap": {"kind": "harmonic", "d": 3}, "N": [64], "options": {"chis": [0, 0.1, 0.3]}}
    code, out = _run(tmp_path, "sweep", cfg)
    assert code == EXIT_OK
    assert len(list(csv.DictReader(open(out / "sweep.csv")))) == 3


def test_verify_subset(tmp_path, capsys):
    code, out = _run(tmp_path, "verify", {"options": {"criteria": ["1"]}})
    assert code == EXIT_OK
    assert "[PASS] criterion 1" in (out / "verify_report.txt").read_text()


@pytest.mark.parametrize("config", [
    "{\"trap\": {\"kind\": \"harmonic\"},\n  \"chi\": 0.3,,}",
    {"trap": {"kind": "harmonic"}},
    {"trap": {"kind": "harmonic"}, "chi": 0.3, "N": [128, 64]},
    {"trap": {"kind": "harmonic"}, "chi": 0.3, "colour": "blue"},
    {"trap": {"kind": "harmonic"}, "chi": 0.3, "seed": -4},
    {"trap": {"kind": "harmonic"}, "chi": 0.3, "options": {"bogus": 1}},
])
def test_config_errors_exit_two(tmp_path, config, capsys):
    code, _ = _run(tmp_path, "weights", config)
    assert code == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_json_error_reports_position(tmp_path, capsys):
    _run(tmp_path, "weights", "{\n  \"trap\": ,\n}")
    assert "line 2, column" in capsys.readouterr().err


def test_divergent_critical_density_exits_three(tmp_path):
    code, _ = _run(tmp_path, "thermo", {"trap": {"kind": "box", "L": 1.0, "d": 2}, "chi": 1.0, "N": [16]})
    assert code == EXIT_NUMERIC


def test_parse_config_defaults():
    cfg = parse_config({"trap": {"kind": "power", "c": 1.0, "alpha_exp": 4}, "a": 0.01}, "weights")
    assert cfg.ladder == (1024,) and cfg.seed == 0 and cfg.beta == 1.0
    assert cfg.a_values() == [0.01]
    with pytest.raises(ConfigError):
        parse_config({"trap": {"kind": "harmonic"}, "a_values": [0.1], "N": [4, 8]}, "weights")
