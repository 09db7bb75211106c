import json
import os
import subprocess

import pytest

CLI = os.environ.get("OPTLEACH_CLI")

pytestmark = pytest.mark.skipif(not CLI, reason="OPTLEACH_CLI not set")


def run(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True)


def test_simulate_writes_csv_and_summary(tmp_path):
    out = tmp_path / "runs"
    res = run("simulate", "--protocol", "leach-eee", "--seed", "4", "--rounds", "15", "--out", str(out))
    assert res.returncode == 0, res.stderr
    csv = (out / "leach-eee_seed4.csv").read_text().splitlines()
    assert csv[0] == "round,packets_delivered,dead_nodes,total_energy"
    assert len(csv) == 16
    summary = json.loads((out / "leach-eee_seed4.json").read_text())
    assert summary["seed"] == 4
    assert summary["protocol"] == "leach-eee"


def test_sweep_and_compare(tmp_path):
    out = tmp_path / "sweep"
    res = run("sweep", "--seeds", "1..2", "--protocols", "leach", "optimized", "--rounds", "10",
              "--out", str(out))
    assert res.returncode == 0, res.stderr
    assert len(list(out.glob("*.csv"))) == 4
    report = tmp_path / "report.md"
    res = run("compare", "--runs", str(out), "--report", str(report))
    assert res.returncode == 0, res.stderr
    text = report.read_text()
    assert "leach" in text and "optimized" in text


def test_bad_config_exits_with_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"bogus": 1}')
    res = run("simulate", "--config", str(bad), "--out", str(tmp_path))
    assert res.returncode == 2


def test_disconnected_field_exits_with_3(tmp_path):
    cfg = tmp_path / "sparse.json"
    cfg.write_text(json.dumps({"node_count": 30, "ch_count": 3,
                               "field_dims": {"width": 2000, "height": 2000},
                               "sink": {"x": 1000, "y": 2100}}))
    res = run("simulate", "--config", str(cfg), "--out", str(tmp_path))
    assert res.returncode == 3
