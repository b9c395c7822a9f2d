import csv
import json
import math

import numpy as np
import pytest

from inls_lab import ConstructionFailure, InvalidConfiguration
from inls_lab import harness
from inls_lab.evolution import rescale
from inls_lab.harness import ExperimentConfig
from inls_lab.radial_core import discrete_kinetic

SMALL = dict(r_max=30.0, n=1499)


def test_threshold_zero_epsilon_is_q(gs03, spec03):
    for direction in harness.DIRECTIONS:
        u0 = harness.build_threshold_data(0.3, direction, 0.0, gs03, spec03)
        assert np.array_equal(u0.values, gs03.field.values)
        assert u0 is not gs03.field


def test_scalar_direction_has_only_q_on_threshold(gs03):
    for eps in (0.05, -0.05):
        u0 = harness.build_threshold_data(0.3, "scalar-Q", eps, gs03)
        assert np.array_equal(u0.values, gs03.field.values)


@pytest.mark.parametrize("eps", [0.05, -0.05, 0.01, -0.2])
def test_threshold_sign_and_ratio(gs03, spec03, eps):
    u0 = harness.build_threshold_data(0.3, "unstable-eigenvector", eps, gs03, spec03)
    assert abs(harness.threshold_ratio(u0, gs03) - 1) < 1e-8
    assert math.copysign(1, discrete_kinetic(u0) - gs03.kinetic_h) == math.copysign(1, eps)


def test_threshold_construction_failure(gs03, spec03, monkeypatch):
    # a direction so large that every amplitude in [0.5, 2] has negative energy
    monkeypatch.setattr(harness, "direction_field", lambda *a: gs03.field * 100.0)
    with pytest.raises(ConstructionFailure):
        harness.build_threshold_data(0.3, "unstable-eigenvector", 0.45, gs03, spec03)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_threshold_product_scaling_invariance(gs05, lam):
    f = gs05.field * 1.03
    before = harness.threshold_product(f, 0.5)
    after = harness.threshold_product(rescale(f, lam, 0.5, "exact"), 0.5)
    assert after == pytest.approx(before, rel=1e-10)


@pytest.mark.parametrize("kw", [dict(b=0.0), dict(b=1.0), dict(b=0.3, epsilon=0.5),
                                dict(b=0.3, direction="sideways"), dict(b=0.3, data="soup"),
                                dict(b=0.3, data="trapped")])
def test_config_validation(kw):
    with pytest.raises(InvalidConfiguration):
        ExperimentConfig(**kw)


@pytest.mark.parametrize("eps, label", [(0.05, "blowup"), (0.0, "trapped_convergent"),
                                        (-0.05, "scatter_proxy")])
def test_trichotomy_small_grid(eps, label):
    rec = harness.run_experiment(ExperimentConfig(b=0.3, epsilon=eps, **SMALL))
    assert rec.classification == label
    assert rec.status != "failed"
    assert abs(rec.initial["threshold_ratio"] - 1) < 1e-8


class _Traj:
    def __init__(self, times, deltas, kin, pot, status="completed"):
        self.times = np.asarray(times, float)
        self._d = np.asarray(deltas, float)
        self.kinetic_ledger = np.asarray(kin, float)
        self.potential_ledger = np.asarray(pot, float)
        self.status = status
        self.blowup_reason = "virial"

    def delta(self, kq):
        return self._d


def test_classify_examples(small_gs):
    cfg = ExperimentConfig(b=0.3)
    kq = small_gs.kinetic_h
    t = np.linspace(0, 5, 40)
    assert harness.classify(_Traj(t, 0 * t, 0 * t + kq, 0 * t), None, cfg, small_gs)[0] == \
        "trapped_convergent"
    assert harness.classify(_Traj(t, 0 * t, 0 * t, 0 * t, "blowup_detected"), None, cfg,
                            small_gs)[0] == "blowup"
    dec = 1e-3 * kq * np.exp(-t)
    assert harness.classify(_Traj(t, dec, kq - dec, 0 * t), None, cfg, small_gs)[0] == \
        "trapped_convergent"
    assert harness.classify(_Traj(t, dec, kq - dec, 0 * t, "truncation_contaminated"), None, cfg,
                            small_gs)[0] == "inconclusive"
    grow = 1e-3 * kq * np.exp(2 * t)
    falling = 10.0 - t
    assert harness.classify(_Traj(t, grow, kq - grow, falling), None, cfg, small_gs)[0] == \
        "scatter_proxy"
    assert harness.classify(_Traj(t, grow, kq - grow, 0 * t + 1), None, cfg, small_gs)[0] == \
        "inconclusive"
    assert harness.classify(_Traj(t, grow, kq + grow, falling), None, cfg, small_gs)[0] == \
        "inconclusive"


def test_sweep_empty(tmp_path):
    assert harness.sweep([], tmp_path) == []
    assert harness.emit_report([], tmp_path)["n_records"] == 0


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    cfgs = [ExperimentConfig(b=b, epsilon=e, direction=d, **SMALL)
            for b in (0.3, 0.5) for d in harness.DIRECTIONS for e in (-0.05, 0.0, 0.05)]
    out = tmp_path_factory.mktemp("sweep")
    return cfgs, harness.sweep(cfgs, out), out


def test_sweep_cardinality_and_order(small_sweep):
    cfgs, recs, out = small_sweep
    assert len(recs) == 12
    assert [r.config for r in recs] == [c.to_dict() for c in cfgs]
    with open(out / "records.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12 and set(rows[0]) == set(harness.ExperimentRecord.CSV_FIELDS)
    assert len(list(out.glob("record_*.json"))) == 12
    d = json.loads((out / "record_000.json").read_text(encoding="utf-8"))
    assert "units" in d
    assert [r.config for r in harness.load_records(out)] == [r.config for r in recs]


def test_sweep_labels(small_sweep):
    _, recs, _ = small_sweep
    for r in recs:
        eps, direction = r.config["epsilon"], r.config["direction"]
        if eps == 0 or direction == "scalar-Q":
            assert r.classification == "trapped_convergent"
        elif eps > 0:
            assert r.classification == "blowup"
        else:
            assert r.classification == "scatter_proxy"


def test_sweep_rows_deterministic(small_sweep, tmp_path):
    cfgs, recs, out = small_sweep
    again = harness.sweep(cfgs[:3], tmp_path)
    assert [r.row() for r in again] == [r.row() for r in recs[:3]]


def test_sweep_records_failures(monkeypatch, tmp_path):
    real = harness.build_threshold_data

    def flaky(b, direction, epsilon, *a, **k):
        if epsilon > 0:
            raise ConstructionFailure("forced")
        return real(b, direction, epsilon, *a, **k)

    monkeypatch.setattr(harness, "build_threshold_data", flaky)
    cfgs = [ExperimentConfig(b=0.3, epsilon=e, **SMALL) for e in (0.0, 0.05)]
    recs = harness.sweep(cfgs, tmp_path)
    assert len(recs) == 2
    assert recs[0].error is None and recs[0].status != "failed"
    assert recs[1].status == "failed" and "forced" in recs[1].error
    with open(tmp_path / "records.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[1]["error"].startswith("ConstructionFailure")


def test_report_counts_partition(small_sweep, tmp_path):
    _, recs, _ = small_sweep
    summary = harness.emit_report(recs, tmp_path)
    assert sum(sum(v.values()) for v in summary["counts"].values()) == len(recs)
    assert sum(summary["totals"].values()) == len(recs)
    with open(tmp_path / "rates.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert "unstable_rate" in rows[0] and all(float(r["unstable_rate"]) > 0 for r in rows)
    assert (tmp_path / "summary.json").exists() and (tmp_path / "strichartz.csv").exists()


def test_report_single_trapped_record(trapped_run, tmp_path):
    rec, _, _ = trapped_run(0.3)
    assert rec.classification == "trapped_convergent"
    harness.emit_report([rec], tmp_path)
    with open(tmp_path / "curves_000.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(float(r["delta"]) > 0 for r in rows)
