import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from leoslice.cli import main
from leoslice.linkmodel import LinkParams, full_rate
from leoslice.simkit import SUMMARY_COLUMNS
from leoslice.slicer import SliceProblem


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(yaml.safe_dump({"horizon": {"n_windows": 1},
                                 "predictor": {"epochs": 20, "mc_samples": 5}}))
    return p


def test_simulate_writes_reports(tmp_path, config, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(config), "--scheme", "FRS", "--scheme", "ADTRS",
                 "--out", str(out), "--events"]) == 0
    text = capsys.readouterr().out
    assert "FRS" in text and "ADTRS 0.9" in text and "config digest" in text
    assert (out / "report_FRS.json").exists() and (out / "report_ADTRS_0.9.json").exists()
    assert (out / "summary.csv").read_text().splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    assert len((out / "slots_FRS.csv").read_text().splitlines()) == 11
    assert (out / "events_ADTRS_0.9.csv").exists()


def test_report_reloads(tmp_path, config, capsys):
    out = tmp_path / "out"
    main(["simulate", "--config", str(config), "--scheme", "PerfectRS", "--out", str(out)])
    capsys.readouterr()
    again = tmp_path / "again"
    assert main(["report", "--in", str(out), "--out", str(again)]) == 0
    assert "PerfectRS" in capsys.readouterr().out
    assert (again / "summary.csv").exists()
    assert main(["report", "--in", str(tmp_path / "empty")]) == 1


def test_train_writes_checkpoint(tmp_path, config, capsys):
    ck = tmp_path / "model.json"
    assert main(["train", "--config", str(config), "--out", str(ck), "--epochs", "15"]) == 0
    doc = json.loads(ck.read_text())
    assert len(doc["layers"]) > 0
    losses = (tmp_path / "model.loss.csv").read_text().splitlines()
    assert losses[0] == "epoch,loss" and len(losses) == 16


def test_solve_prints_decision(tmp_path, capsys):
    d = np.array([[600.0, 700.0], [900.0, 800.0]])
    th = 0.3 * full_rate(d, LinkParams()).sum(axis=0)
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps(SliceProblem([3, 5], np.ones((2, 2)), d, th).to_dict()))
    assert main(["solve", "--instance", str(inst)]) == 0
    dec = json.loads(capsys.readouterr().out)
    assert dec["sat_ids"] == [3, 5]
    assert all(c <= a for c, a in zip(dec["candidate"], dec["active"]))


def test_sweep_writes_csv(tmp_path, config, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(config), "--elevations", "30,40", "--scheme", "FDTRS",
                 "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("elevation_deg,") and len(rows) == 3


def test_errors_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("mystery: {}\n")
    assert main(["simulate", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["solve", "--instance", str(tmp_path / "none.json")]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "leoslice", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("simulate", "train", "solve", "sweep", "report"):
        assert cmd in out.stdout
