"""Experiment orchestration: threshold data, trichotomy runs, sweeps and reports.

Time horizons default to multiples of 1/e0, the unstable rate of the discrete
linearization, because every near-threshold trajectory leaves (or reaches) the
ground-state orbit on that clock; e0 ranges from ~6 to ~10^3 across b.
"""
from __future__ import annotations

import csv
import json
import math
import time
from importlib import metadata
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import (ConstructionFailure, FitDomainError, InsufficientData, InvalidConfiguration,
                     LabError)
from .evolution import EvolveConfig, Reference, Trajectory, compute_sc, evolve, rescale
from .ground_state import GroundState, solve_ground_state
from .linearized import SpectrumReport, assemble, spectrum
from .modulation import (alpha_drift_envelope, decompose_trajectory, rate_fit, strichartz_table,
                         virial_ratio_max, zeta_limit)
from .radial_core import (RadialField, discrete_energy, discrete_kinetic, discrete_mass,
                          discrete_potential, inner, make_grid, norm_h1_sq)

LABELS = ("blowup", "scatter_proxy", "trapped_convergent", "inconclusive")
DIRECTIONS = ("scalar-Q", "unstable-eigenvector")


@dataclass(frozen=True)
class ExperimentConfig:
    b: float
    direction: str = "unstable-eigenvector"
    epsilon: float = 0.0
    data: str = "threshold"           # "threshold" or "trapped" (stable-manifold surrogate)
    r_max: float = 60.0
    n: int = 5999
    dt0: Optional[float] = None        # default min(4e-3, 0.05/e0)
    t_final: Optional[float] = None    # default from the e-fold horizons below
    sample_every: Optional[float] = None
    efolds_standing: float = 10.0
    efolds_threshold: float = 12.0
    scatter_time: float = 1.0
    trapped_seed: float = 1e-8
    trapped_tail_efolds: float = 2.0
    delta0_frac: float = 0.1
    noise_floor: float = 1e-8
    rms_gate: float = 0.5
    monotone_fraction: float = 0.25
    boundary_mass_cap: float = 1e-4
    seed: str = "default"

    def __post_init__(self):
        if not 0.0 < self.b < 1.0:
            raise InvalidConfiguration(f"b must lie in (0,1), got {self.b}")
        if not -0.5 < self.epsilon < 0.5:
            raise InvalidConfiguration(f"epsilon must lie in (-0.5, 0.5), got {self.epsilon}")
        if self.direction not in DIRECTIONS:
            raise InvalidConfiguration(f"direction must be one of {DIRECTIONS}")
        if self.data not in ("threshold", "trapped"):
            raise InvalidConfiguration("data must be 'threshold' or 'trapped'")
        if self.data == "trapped" and self.epsilon == 0.0:
            raise InvalidConfiguration("trapped data needs a nonzero epsilon")

    def to_dict(self):
        return asdict(self)


@dataclass
class ExperimentRecord:
    config: Dict
    initial: Dict
    classification: str
    rates: Dict
    virial: Dict
    truncation: bool
    status: str
    runtime: float
    notes: List[str] = field(default_factory=list)
    curves: Dict = field(default_factory=dict, repr=False)
    error: Optional[str] = None

    CSV_FIELDS = ("b", "direction", "epsilon", "data", "n", "r_max", "classification", "status",
                  "mass", "energy", "kinetic", "threshold_ratio", "delta_rate", "delta_rms",
                  "alpha_rate", "zeta0", "unstable_rate", "virial_ratio_max", "truncation",
                  "t_final", "error")

    def row(self):
        c, i, r = self.config, self.initial, self.rates
        return {
            "b": c["b"], "direction": c["direction"], "epsilon": c["epsilon"], "data": c["data"],
            "n": c["n"], "r_max": c["r_max"], "classification": self.classification,
            "status": self.status, "mass": i.get("mass"), "energy": i.get("energy"),
            "kinetic": i.get("kinetic"), "threshold_ratio": i.get("threshold_ratio"),
            "delta_rate": r.get("delta_rate"), "delta_rms": r.get("delta_rms"),
            "alpha_rate": r.get("alpha_rate"), "zeta0": r.get("zeta0"),
            "unstable_rate": r.get("unstable_rate"),
            "virial_ratio_max": self.virial.get("ratio_max"), "truncation": int(self.truncation),
            "t_final": i.get("t_final"), "error": self.error or "",
        }

    def to_json(self):
        d = asdict(self)
        d["units"] = {"mass": "int |u|^2 dx", "energy": "K/2 - P/4", "kinetic": "int |grad u|^2 dx",
                      "time": "equation time", "rates": "1/time"}
        d["code_version"] = code_version()
        return d


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# -- cached ground states and spectra ---------------------------------------------

@lru_cache(maxsize=32)
def ground_state(b: float, r_max: float = 60.0, n: int = 5999) -> GroundState:
    return solve_ground_state(b, make_grid(r_max, n))


@lru_cache(maxsize=32)
def linear_spectrum(b: float, r_max: float = 60.0, n: int = 5999) -> SpectrumReport:
    gs = ground_state(b, r_max, n)
    return spectrum(assemble(b, gs))


# -- threshold data ----------------------------------------------------------------

def threshold_product(f: RadialField, b: float) -> float:
    s = compute_sc(b)
    E = discrete_energy(f, b)
    if not E > 0:
        return -math.inf
    return discrete_mass(f) ** (1 - s) * E ** s


def threshold_ratio(f: RadialField, Q: GroundState) -> float:
    s = compute_sc(Q.b)
    target = Q.mass_h ** (1 - s) * Q.energy_h ** s
    return threshold_product(f, Q.b) / target


def direction_field(direction: str, Q: GroundState, spec: Optional[SpectrumReport]) -> RadialField:
    """Perturbation direction with unit H^1 norm; the sign makes its alpha-component positive."""
    if direction == "scalar-Q":
        d = Q.field
    elif direction == "unstable-eigenvector":
        if spec is None:
            raise InvalidConfiguration("unstable direction needs a spectrum report")
        d = spec.y_plus()
    else:
        raise InvalidConfiguration(f"unknown direction {direction!r}")
    lapq = Q.laplacian_q()
    a = inner(d.real, lapq).real / inner(Q.field, lapq).real
    if a < 0:
        d = -d
    return d * (1.0 / math.sqrt(norm_h1_sq(d)))


def build_threshold_data(b: float, direction: str, epsilon: float, Q: GroundState,
                         spec: Optional[SpectrumReport] = None, tol: float = 1e-12) -> RadialField:
    """u0 = lambda-rescaled beta (Q + epsilon d) with M[u0] = M[Q] and E[u0] = E[Q].

    beta solves M^{1-s}E^s[beta w] = M^{1-s}E^s[Q] on [0.5, 2]; of the two roots
    around the maximum in beta, the larger is used for epsilon > 0 and the smaller
    for epsilon < 0.  lambda then fixes the mass; a final two-parameter Newton
    polish removes the interpolation error of the rescaling.
    """
    if not abs(epsilon) < 0.5:
        raise InvalidConfiguration("|epsilon| must be below 0.5")
    if abs(b - Q.b) > 1e-14:
        raise InvalidConfiguration("ground state computed for a different b")
    if epsilon == 0.0 or direction == "scalar-Q":
        # Q + eps Q stays on the scaling curve through Q, whose only threshold point is Q;
        # the discrete Pohozaev defect (O(h^2)) would otherwise split this double root
        return RadialField(Q.grid, Q.field.values.copy())
    s = compute_sc(b)
    target = Q.mass_h ** (1 - s) * Q.energy_h ** s
    d = direction_field(direction, Q, spec)
    w = Q.field + epsilon * d
    Mw, Kw, Pw = discrete_mass(w), discrete_kinetic(w), discrete_potential(w, b)

    def excess(beta):
        E = 0.5 * beta ** 2 * Kw - 0.25 * beta ** 4 * Pw
        if E <= 0:
            return -1.0
        return (beta ** 2 * Mw) ** (1 - s) * E ** s / target - 1.0

    peak = minimize_scalar(lambda x: -excess(x), bounds=(0.5, 2.0), method="bounded",
                           options={"xatol": 1e-13})
    beta_star, top = float(peak.x), -float(peak.fun)
    if top < -1e-12:
        raise ConstructionFailure("no amplitude reaches the threshold product")
    if top <= 1e-9:
        # tangency: the threshold is only touched, at the peak itself
        beta = beta_star
    else:
        try:
            if epsilon > 0:
                beta = brentq(excess, beta_star, 2.0, xtol=1e-15, rtol=1e-15)
            else:
                beta = brentq(excess, 0.5, beta_star, xtol=1e-15, rtol=1e-15)
        except ValueError as exc:
            raise ConstructionFailure(f"no threshold amplitude in [0.5, 2] ({exc})") from exc
    u = w * beta
    lam = (discrete_mass(u) / Q.mass_h) ** (1.0 / (1.0 + b))
    if abs(lam - 1.0) < 1e-15:
        return u

    def resid(x):
        f = rescale(w * x[0], x[1], b)
        return np.array([discrete_mass(f) / Q.mass_h - 1.0,
                         discrete_energy(f, b) / Q.energy_h - 1.0]), f

    x = np.array([beta, lam])
    for _ in range(20):
        F, f = resid(x)
        if np.max(np.abs(F)) < tol:
            return f
        J = np.empty((2, 2))
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = 1e-7 * x[k]
            J[:, k] = (resid(x + dx)[0] - resid(x - dx)[0]) / (2 * dx[k])
        x = x - np.linalg.solve(J, F)
    F, f = resid(x)
    if np.max(np.abs(F)) > 1e-9:
        raise ConstructionFailure(f"mass/energy polish stalled at {np.max(np.abs(F)):.2e}")
    return f


def build_trapped_data(b: float, epsilon: float, Q: GroundState, spec: SpectrumReport,
                       seed: float = 1e-8, dt: Optional[float] = None):
    """Point at distance ~|epsilon| on the stable manifold of Q (K below K[Q] when epsilon < 0).

    Q + seed*Y+ is at threshold up to O(seed^3) and follows the unstable
    manifold; it is evolved until ||g||_{H^1} reaches |epsilon|, and the
    conjugate of that state (time reversal) then flows back onto Q at rate e0.
    Returns (u0, retrace_time).
    """
    e0 = spec.unstable_rate
    sign = 1.0 if epsilon > 0 else -1.0
    d = direction_field("unstable-eigenvector", Q, spec)
    u = Q.field + (sign * seed) * d
    dt = min(4e-3, 0.05 / e0) if dt is None else dt
    T = math.log(abs(epsilon) / seed) / e0
    cfg = EvolveConfig(dt0=dt, t_final=2.0 * T, sample_every=0.05 / e0,
                       reference=Reference.from_ground_state(Q), virial_certificate=False)
    traj = evolve(u, cfg, b)
    frames = decompose_trajectory(traj.times, traj.states, Q, delta0=math.inf)
    g = np.array([f.g_h1 for f in frames])
    k = int(np.argmax(g >= abs(epsilon))) if np.any(g >= abs(epsilon)) else None
    if k is None or k == 0:
        raise ConstructionFailure("unstable-manifold seed never reached the requested distance")
    # conj(u(T - t)) solves the same equation, so this state retraces the seed path
    return traj.states[k].conj(), float(frames[k].t)


# -- classification ------------------------------------------------------------------

def classify(traj: Trajectory, frames, cfg: ExperimentConfig, Q: GroundState):
    """Label a finished run; returns (label, details)."""
    kq = Q.kinetic_h
    d0 = cfg.delta0_frac * kq
    details: Dict = {}
    if traj.status == "blowup_detected":
        details["reason"] = traj.blowup_reason
        return "blowup", details
    deltas = traj.delta(kq)
    if np.max(deltas) <= cfg.noise_floor * kq:
        details["reason"] = "delta at noise floor"
        return "trapped_convergent", details
    truncated = traj.status == "truncation_contaminated"
    in_win = deltas < d0
    if np.all(in_win):
        if truncated:
            return "inconclusive", {"reason": "truncation"}
        fit = _delta_fit(traj.times, deltas)
        details["fit"] = fit
        if fit is not None and fit.c > 0 and fit.rms_log_residual < cfg.rms_gate:
            return "trapped_convergent", details
        return "inconclusive", details
    # exited the window
    j = int(np.argmax(~in_win))
    outward_low = traj.kinetic_ledger[j] < kq
    details["exit_time"] = float(traj.times[j])
    P = traj.potential_ledger
    q0 = int(len(P) * (1 - cfg.monotone_fraction))
    tail = P[q0:]
    mono = tail.size >= 2 and bool(np.all(np.diff(tail) < 0))
    details["potential_monotone_tail"] = mono
    if outward_low and mono and not truncated:
        return "scatter_proxy", details
    details["reason"] = "truncation" if truncated else "window exit without scatter signature"
    return "inconclusive", details


def _delta_fit(times, deltas):
    """Rate fit over the latter half of the time range."""
    t = np.asarray(times)
    d = np.asarray(deltas)
    m = (t >= t[0] + 0.5 * (t[-1] - t[0])) & (d > 0)
    try:
        return rate_fit((t[m], d[m]))
    except FitDomainError:
        return None


# -- running ----------------------------------------------------------------------------

def _horizons(cfg: ExperimentConfig, e0: float, retrace: Optional[float] = None):
    dt = cfg.dt0 if cfg.dt0 is not None else min(4e-3, 0.05 / e0)
    samp = cfg.sample_every if cfg.sample_every is not None else 0.25 / e0
    if cfg.t_final is not None:
        T = cfg.t_final
    elif cfg.data == "trapped":
        # the last e-folds before the retrace time sit on the seed floor
        T = retrace - cfg.trapped_tail_efolds / e0
    elif cfg.epsilon == 0.0 or cfg.direction == "scalar-Q":
        # the data is Q itself
        T = cfg.efolds_standing / e0
    else:
        T = cfg.efolds_threshold / e0 + cfg.scatter_time
    samp = min(samp, T / 8)
    return dt, T, samp


def run_experiment(cfg: ExperimentConfig, keep_trajectory: bool = False):
    t_start = time.perf_counter()
    Q = ground_state(cfg.b, cfg.r_max, cfg.n)
    spec = linear_spectrum(cfg.b, cfg.r_max, cfg.n)
    e0 = spec.unstable_rate
    notes: List[str] = []
    retrace = None
    if cfg.data == "trapped":
        u0, retrace = build_trapped_data(cfg.b, cfg.epsilon, Q, spec, seed=cfg.trapped_seed,
                                         dt=cfg.dt0)
        notes.append(f"stable-manifold surrogate, retrace time {retrace:.6g}")
    else:
        u0 = build_threshold_data(cfg.b, cfg.direction, cfg.epsilon, Q, spec)
    dt, T, samp = _horizons(cfg, e0, retrace)
    ecfg = EvolveConfig(dt0=dt, t_final=T, sample_every=samp,
                        boundary_mass_cap=cfg.boundary_mass_cap,
                        reference=Reference.from_ground_state(Q), delta0_frac=cfg.delta0_frac)
    traj = evolve(u0, ecfg, cfg.b)
    frames = decompose_trajectory(traj.times, traj.states, Q, delta0=cfg.delta0_frac * Q.kinetic_h)
    label, details = classify(traj, frames, cfg, Q)
    initial = {
        "mass": discrete_mass(u0), "energy": discrete_energy(u0, cfg.b),
        "kinetic": discrete_kinetic(u0), "threshold_ratio": threshold_ratio(u0, Q),
        "kinetic_minus_KQ": discrete_kinetic(u0) - Q.kinetic_h, "t_final": T, "dt0": dt,
        "sample_every": samp,
    }
    rates, virial, curves = _diagnostics(traj, frames, Q, e0)
    if details.get("reason"):
        notes.append(f"classification: {details['reason']}")
    if traj.blowup_time_bound is not None:
        notes.append(f"virial blowup-time bound {traj.blowup_time_bound:.6g}")
    rec = ExperimentRecord(
        config=cfg.to_dict(), initial=initial, classification=label, rates=rates,
        virial=virial, truncation=traj.status == "truncation_contaminated",
        status=traj.status, runtime=time.perf_counter() - t_start, notes=notes + traj.notes,
        curves=curves,
    )
    return (rec, traj, frames) if keep_trajectory else rec


def _diagnostics(traj, frames, Q, e0):
    rates: Dict = {"unstable_rate": e0}
    virial: Dict = {}
    t = np.array([f.t for f in frames])
    dl = np.array([f.delta for f in frames])
    al = np.array([f.alpha for f in frames])
    zt = np.array([f.zeta for f in frames])
    curves = {"t": t.tolist(), "delta": dl.tolist(), "alpha": al.tolist(), "zeta": zt.tolist()}
    win = [f for f in frames if f.in_window]
    if len(win) >= 8:
        tw = np.array([f.t for f in win])
        dw = np.array([f.delta for f in win])
        fit = _delta_fit(tw, dw)
        if fit is not None:
            rates.update(delta_rate=fit.c, delta_rms=fit.rms_log_residual)
        te, env = alpha_drift_envelope(win)
        m = env > 0
        try:
            af = rate_fit((te[m], env[m]), window=(te[0] + 0.5 * (te[-1] - te[0]), te[-1]))
            rates.update(alpha_rate=af.c, alpha_rms=af.rms_log_residual)
        except FitDomainError:
            pass
        zl = zeta_limit(win)
        rates["zeta0"] = zl.zeta0
        if zl.rate is not None:
            rates["zeta_cauchy_rate"] = zl.rate.c
        try:
            curves["strichartz"] = strichartz_table(win)
        except (InsufficientData, ValueError):
            pass
        pos = dw > 0
        if pos.sum() >= 2:
            rmax, (t1, t2) = virial_ratio_max(tw[pos], dw[pos])
            virial.update(ratio_max=rmax, window=(t1, t2))
    return rates, virial, curves


def _run_safe(cfg: ExperimentConfig):
    try:
        return run_experiment(cfg)
    except (LabError, ValueError, FloatingPointError) as exc:
        return ExperimentRecord(config=cfg.to_dict(), initial={}, classification="inconclusive",
                                rates={}, virial={}, truncation=False, status="failed",
                                runtime=0.0, error=f"{type(exc).__name__}: {exc}")


def sweep(configs: Sequence[ExperimentConfig], out_dir: Optional[str] = None,
          workers: int = 1) -> List[ExperimentRecord]:
    """Run every config; failures become rows with an error field.  Output order = input order."""
    configs = list(configs)
    if not configs:
        records: List[ExperimentRecord] = []
    elif workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_run_safe, configs))
    else:
        records = [_run_safe(c) for c in configs]
    if out_dir is not None:
        write_records(records, out_dir)
    return records


def grid_configs(bs: Iterable[float], epsilons: Iterable[float], **kw) -> List[ExperimentConfig]:
    return [ExperimentConfig(b=b, epsilon=e, **kw) for b in bs for e in epsilons]


def write_records(records: Sequence[ExperimentRecord], out_dir: str):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=ExperimentRecord.CSV_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow(r.row())
    for k, r in enumerate(records):
        with open(out / f"record_{k:03d}.json", "w", encoding="utf-8") as fh:
            json.dump(r.to_json(), fh, indent=1, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def load_records(out_dir: str) -> List[ExperimentRecord]:
    recs = []
    for p in sorted(Path(out_dir).glob("record_*.json")):
        d = json.loads(p.read_text(encoding="utf-8"))
        d.pop("units", None)
        d.pop("code_version", None)
        recs.append(ExperimentRecord(**d))
    return recs


# -- reporting ---------------------------------------------------------------------------

def emit_report(records: Sequence[ExperimentRecord], out_dir: Optional[str] = None) -> Dict:
    """Counts per (b, sign epsilon), a rate table with the linearized rate, and curve CSVs."""
    counts: Dict[str, Dict[str, int]] = {}
    rate_rows = []
    for r in records:
        c = r.config
        sgn = "0" if c["epsilon"] == 0 else ("+" if c["epsilon"] > 0 else "-")
        key = f"b={c['b']:g},eps{sgn}"
        counts.setdefault(key, {lab: 0 for lab in LABELS})
        counts[key][r.classification] = counts[key].get(r.classification, 0) + 1
        rate_rows.append({"b": c["b"], "epsilon": c["epsilon"], "data": c["data"],
                          "classification": r.classification,
                          "delta_rate": r.rates.get("delta_rate"),
                          "alpha_rate": r.rates.get("alpha_rate"),
                          "zeta0": r.rates.get("zeta0"),
                          "unstable_rate": r.rates.get("unstable_rate"),
                          "virial_ratio_max": r.virial.get("ratio_max")})
    summary = {"n_records": len(records), "counts": counts, "rates": rate_rows,
               "totals": {lab: sum(v.get(lab, 0) for v in counts.values()) for lab in LABELS}}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "rates.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rate_rows[0].keys()) if rate_rows else
                               ["b", "epsilon", "data", "classification", "delta_rate",
                                "alpha_rate", "zeta0", "unstable_rate", "virial_ratio_max"])
            w.writeheader()
            for row in rate_rows:
                w.writerow(row)
        for k, r in enumerate(records):
            cur = r.curves
            if not cur or not cur.get("t"):
                continue
            with open(out / f"curves_{k:03d}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "delta", "alpha", "zeta"])
                for row in zip(cur["t"], cur["delta"], cur["alpha"], cur["zeta"]):
                    w.writerow(row)
        with open(out / "strichartz.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["record", "b", "epsilon", "pair", "g", "grad_g"])
            for k, r in enumerate(records):
                for label, m in (r.curves or {}).get("strichartz", {}).items():
                    w.writerow([k, r.config["b"], r.config["epsilon"], label, m["g"], m["grad_g"]])
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=1, default=_json_default)
    return summary
