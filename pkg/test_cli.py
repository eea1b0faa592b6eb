"""
Tests de la ligne de commande : sorties CSV/JSON et codes de sortie
"""

import csv
import json

import pytest

from cli import EXIT_CONFIG, EXIT_OK, attach_option_values, main, parse_grid
from intensities import ConfigurationError


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return str(path)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_parse_grid_inclusive():
    grid = parse_grid("-3:3:0.1")
    assert grid.size == 61
    assert grid[0] == -3.0 and grid[-1] == pytest.approx(3.0)
    with pytest.raises(ConfigurationError):
        parse_grid("1:0:0.1")
    with pytest.raises(ConfigurationError):
        parse_grid("a:b")


def test_negative_grid_value_is_attached():
    assert attach_option_values(["kernel-table", "--grid", "-3:3:0.1", "--t", "1"]) == \
        ["kernel-table", "--grid=-3:3:0.1", "--t", "1"]
    assert attach_option_values(["kernel-table", "--grid"]) == ["kernel-table", "--grid"]


def test_kernel_table(tmp_path):
    out = tmp_path / "run"
    args = ["kernel-table", "--t", "1", "--s", "0.5", "--grid", "-3:3:0.1", "--out", str(out)]
    assert main(args) == EXIT_OK
    first = (out / "kernel_table.csv").read_bytes()
    rows = read_rows(out / "kernel_table.csv")
    assert rows[0] == ["z", "K11", "K12", "K21", "K22"]
    assert len(rows) == 62
    assert "e" in rows[1][1]
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["task"] == "kernel-table"
    assert summary["config"]["kernel"]["grid"] == "-3:3:0.1"
    assert "version" in summary
    assert main(args) == EXIT_OK
    assert (out / "kernel_table.csv").read_bytes() == first


def test_negative_dt_is_rejected(tmp_path, capsys):
    config = write_config(tmp_path, {"simulation": {"dt": -0.001}})
    assert main(["simulate", "--config", config, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "simulation.dt" in err
    assert "config.json:3" in err


def test_unknown_field_and_bad_json(tmp_path, capsys):
    assert main(["intensity", "--config", write_config(tmp_path, {"colour": 1})]) == EXIT_CONFIG
    assert "colour" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "replicas": ,\n}', encoding="utf-8")
    assert main(["intensity", "--config", str(bad)]) == EXIT_CONFIG
    assert "bad.json:2" in capsys.readouterr().err


def test_pfaffian_command(tmp_path, capsys):
    matrix = tmp_path / "m.csv"
    matrix.write_text("0,1,2,3\n-1,0,4,5\n-2,-4,0,6\n-3,-5,-6,0\n", encoding="utf-8")
    assert main(["pfaffian", str(matrix), "--out", str(tmp_path / "o")]) == EXIT_OK
    printed = capsys.readouterr().out.split("Pf =")[1].split()[0]
    assert float(printed) == pytest.approx(8.0)
    odd = tmp_path / "odd.csv"
    odd.write_text("0,1,2\n-1,0,3\n-2,-3,0\n", encoding="utf-8")
    assert main(["pfaffian", str(odd), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_intensity_reports_both_conventions(tmp_path):
    config = write_config(tmp_path, {"spins": {"t": 1.0, "ys": [0.0, 1.0]}, "output": str(tmp_path / "o")})
    assert main(["intensity", "--config", config]) == EXIT_OK
    rows = read_rows(tmp_path / "o" / "intensity.csv")
    values = {row[1]: float(row[5]) for row in rows[1:]}
    assert values["resolved"] == pytest.approx(0.4795001, abs=1e-7)
    assert values["literal"] == pytest.approx(-0.4795001, abs=1e-7)


def test_validate_face_suite(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["validate", "--suite", "face", "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["passed"] is True
    assert summary["comparisons"] == 4
    assert all(r["pass"] for r in summary["reports"]["face"])
    assert "✓" in capsys.readouterr().out
    assert (out / "reports.csv").exists()


def test_face_check_with_configured_spins(tmp_path):
    config = write_config(tmp_path, {
        "spins": {"t": 1.0, "ys": [0.0, 1.0, 1.0, 2.5]},
        "points": [{"t": 0.5, "z": 0.3}],
        "output": str(tmp_path / "f"),
    })
    assert main(["face-check", "--config", config]) == EXIT_OK


def test_simulate_dumps_snapshots(tmp_path):
    config = write_config(tmp_path, {
        "replicas": 3,
        "simulation": {"lambda": 40.0, "half_width": 3.0, "margin": 3.0, "dt": 0.002,
                       "snapshot_times": [0.25, 0.5], "batch_size": 2},
        "output": str(tmp_path / "s"),
    })
    assert main(["simulate", "--config", config, "--seed", "5"]) == EXIT_OK
    rows = read_rows(tmp_path / "s" / "snapshots.csv")
    assert rows[0] == ["replica", "time", "count", "positions"]
    assert len(rows) == 1 + 3 * 2
    for row in rows[1:]:
        positions = row[3].split()
        assert int(row[2]) == len(positions)
