import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from inls_lab.cli import main

GRID = ["--rmax", "30", "--n", "1499"]


def _csv(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_groundstate_writes_profile(tmp_path):
    assert main(["groundstate", "--b", "0.3", *GRID, "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "groundstate.json").read_text(encoding="utf-8"))
    assert rec["b"] == 0.3 and "units" in rec
    rows = _csv(tmp_path / "profile.csv")
    assert len(rows) == 1499 and list(rows[0]) == ["r", "Q"]


def test_spectrum_to_file(tmp_path):
    out = tmp_path / "spec.json"
    assert main(["spectrum", "--b", "0.3", *GRID, "--k", "4", "--out", str(out)]) == 0
    rec = json.loads(out.read_text(encoding="utf-8"))
    assert rec["neg_count_plus"] == 1 and rec["unstable_rate"] > 0 and len(rec["eig_plus"]) == 4


def test_config_keys_overridden_by_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"b": 0.9, "rmax": 30, "n": 1499,
                               "evolve": {"tfinal": 0.02, "dt": 1e-3, "sample_every": 0.01}}),
                   encoding="utf-8")
    out = tmp_path / "run"
    assert main(["evolve", "--config", str(cfg), "--b", "0.3", "--data", "scale:0.5",
                 "--dump-states", "--out", str(out)]) == 0
    meta = json.loads((out / "trajectory.json").read_text(encoding="utf-8"))
    assert meta["b"] == 0.3 and meta["config"]["t_final"] == 0.02 and "units" in meta
    rows = _csv(out / "trajectory.csv")
    assert len(rows) == 3
    assert list(rows[0]) == ["t", "mass", "energy", "grad_l2_sq", "delta", "potential"]
    z = np.load(out / "states.npz")
    assert z["v"].shape == (3, 1499)


def test_modulate_from_dumped_states(tmp_path):
    run = tmp_path / "run"
    assert main(["evolve", "--b", "0.3", *GRID, "--data", "threshold:unstable-eigenvector:-0.01",
                 "--tfinal", "0.2", "--dt", "2e-3", "--sample-every", "0.02", "--dump-states",
                 "--out", str(run)]) == 0
    out = tmp_path / "mod"
    assert main(["modulate", "--traj", str(run / "states.npz"), "--out", str(out)]) == 0
    rows = _csv(out / "frames.csv")
    assert len(rows) == 11 and all(float(r["delta"]) >= 0 for r in rows)
    summary = json.loads((out / "modulation.json").read_text(encoding="utf-8"))
    assert summary["n_frames"] == 11 and "units" in summary


def test_sweep_and_report(tmp_path):
    rec = tmp_path / "rec"
    assert main(["sweep", "--b", "0.3,0.5", "--epsilon", "0.05", *GRID, "--out", str(rec)]) == 0
    assert len(_csv(rec / "records.csv")) == 2
    rep = tmp_path / "rep"
    assert main(["report", "--records", str(rec), "--out", str(rep)]) == 0
    summary = json.loads((rep / "summary.json").read_text(encoding="utf-8"))
    assert summary["totals"]["blowup"] == 2


@pytest.mark.parametrize("argv", [
    ["groundstate", "--b", "1.5", *GRID],
    ["groundstate", *GRID],
    ["evolve", "--b", "0.3", *GRID, "--data", "wobble"],
    ["evolve", "--b", "0.3", *GRID, "--data", "threshold:unstable-eigenvector:0.7"],
    ["evolve", "--b", "0.3", *GRID, "--config", "/nonexistent/config.json"],
    ["sweep", "--b", "0.3", "--epsilon", "a,b", *GRID],
    ["report", "--records", "/nonexistent/records"],
])
def test_invalid_configuration_exit_code(argv, capsys):
    assert main(argv) == 2


def test_numeric_failure_exit_code(tmp_path):
    # states that never come near the ground-state orbit
    path = tmp_path / "zero.npz"
    np.savez(path, b=0.3, r_max=30.0, n=1499, times=np.array([0.0, 0.1]), v=np.zeros((2, 1499)))
    assert main(["modulate", "--traj", str(path)]) == 3


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "inls_lab", "groundstate", "--b", "0.3", *GRID],
                       capture_output=True, text=True, timeout=300)
    assert p.returncode == 0
    assert json.loads(p.stdout)["b"] == 0.3
    p = subprocess.run([sys.executable, "-m", "inls_lab", "groundstate", "--b", "-1"],
                       capture_output=True, text=True, timeout=300)
    assert p.returncode == 2
