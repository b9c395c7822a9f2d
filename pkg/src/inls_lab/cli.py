"""Command line entry point: inls-lab <subcommand> [--config file.json] [flags].

A JSON config supplies defaults; any flag given on the command line overrides
the key of the same name (dashes and underscores are interchangeable).  Keys
may also be nested under the subcommand name.  Exit codes: 0 success,
2 invalid configuration, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import InvalidConfiguration, LabError, NumericFailure

DEFAULTS = {
    "groundstate": {"b": None, "rmax": 60.0, "n": 5999, "tol": 1e-8, "out": None},
    "spectrum": {"b": None, "rmax": 60.0, "n": 5999, "k": 6, "out": None},
    "evolve": {"b": None, "data": "Q", "tfinal": 1.0, "dt": 4e-3, "sample_every": 0.05,
               "rmax": 60.0, "n": 5999, "scheme": "cn", "out": None, "dump_states": False},
    "modulate": {"traj": None, "b": None, "delta0_frac": 0.1, "out": None},
    "sweep": {"b": None, "epsilon": "-0.05,0.0,0.05", "direction": "unstable-eigenvector",
              "data": "threshold", "rmax": 60.0, "n": 5999, "workers": 1, "out": None},
    "report": {"records": None, "out": None},
}

TYPES = {"b": str, "rmax": float, "n": int, "tol": float, "k": int, "tfinal": float, "dt": float,
         "sample_every": float, "delta0_frac": float, "workers": int}


def _parser():
    p = argparse.ArgumentParser(prog="inls-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, keys in DEFAULTS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON file with defaults for the flags")
        for key, default in keys.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                sp.add_argument(flag, dest=key, action="store_true", default=None)
            else:
                conv = TYPES.get(key, str)
                if name in ("groundstate", "spectrum", "evolve", "modulate") and key == "b":
                    conv = float
                sp.add_argument(flag, dest=key, type=conv, default=None)
    return p


def load_settings(command: str, args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS[command])
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfiguration(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise InvalidConfiguration("config must be a JSON object")
        merged = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
        merged.update(cfg.get(command, {}) if isinstance(cfg.get(command), dict) else {})
        for k, v in merged.items():
            key = k.replace("-", "_")
            if key in settings:
                settings[key] = v
            elif key not in DEFAULTS and not any(key in d for d in DEFAULTS.values()):
                print(f"inls-lab: ignoring config key {k!r}", file=sys.stderr)
    for key in DEFAULTS[command]:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    return settings


def _require(settings, *keys):
    for k in keys:
        if settings.get(k) is None:
            raise InvalidConfiguration(f"missing required setting {k!r}")


def _float_list(x):
    if isinstance(x, (list, tuple)):
        return [float(v) for v in x]
    if isinstance(x, (int, float)):
        return [float(x)]
    try:
        return [float(v) for v in str(x).split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidConfiguration(f"expected a comma separated list of numbers, got {x!r}") from exc


def _write_json(obj, out):
    text = json.dumps(obj, indent=1, default=_default)
    if out is None:
        print(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")


def _default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _write_csv(path, header, rows):
    fh = sys.stdout if path is None else open(path, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path is not None:
            fh.close()


def _grid(s):
    from .radial_core import make_grid
    return make_grid(float(s["rmax"]), int(s["n"]))


# -- subcommands ------------------------------------------------------------------------

def cmd_groundstate(s):
    from .ground_state import solve_ground_state
    _require(s, "b")
    gs = solve_ground_state(float(s["b"]), _grid(s), tol=float(s["tol"]))
    rec = gs.summary()
    rec["units"] = {"mass": "int Q^2 dx", "kinetic": "int |grad Q|^2 dx",
                    "potential": "int |x|^-b Q^4 dx", "energy": "K/2 - P/4"}
    if s["out"] is None:
        _write_json(rec, None)
        return
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(rec, out / "groundstate.json")
    _write_csv(out / "profile.csv", ["r", "Q"],
               zip(gs.grid.nodes.tolist(), np.real(gs.field.values).tolist()))


def cmd_spectrum(s):
    from .ground_state import solve_ground_state
    from .linearized import assemble, spectrum
    _require(s, "b")
    b = float(s["b"])
    gs = solve_ground_state(b, _grid(s))
    rep = spectrum(assemble(b, gs), k=int(s["k"]))
    rec = rep.summary()
    rec["units"] = {"unstable_rate": "1/time", "eigenvalues": "same scale as -Delta + 1"}
    _write_json(rec, s["out"])


def build_data(desc: str, b: float, gs, rep=None):
    """Initial data from a short description.

    Q | scale:<c> | threshold:<direction>:<epsilon> | trapped:<epsilon>
    """
    from . import harness
    parts = str(desc).split(":")
    kind = parts[0]
    try:
        if kind == "Q" and len(parts) == 1:
            return gs.field, None
        if kind == "scale" and len(parts) == 2:
            return gs.field * float(parts[1]), None
        if kind == "threshold" and len(parts) == 3:
            return harness.build_threshold_data(b, parts[1], float(parts[2]), gs, rep), None
        if kind == "trapped" and len(parts) == 2:
            return harness.build_trapped_data(b, float(parts[1]), gs, rep)
    except ValueError as exc:
        if isinstance(exc, LabError):
            raise
        raise InvalidConfiguration(f"bad data description {desc!r}: {exc}") from exc
    raise InvalidConfiguration(f"bad data description {desc!r}")


def cmd_evolve(s):
    from .evolution import EvolveConfig, Reference, evolve
    from .ground_state import solve_ground_state
    from .linearized import assemble, spectrum
    _require(s, "b")
    b = float(s["b"])
    gs = solve_ground_state(b, _grid(s))
    rep = spectrum(assemble(b, gs)) if str(s["data"]).split(":")[0] in ("threshold", "trapped") else None
    u0, _ = build_data(s["data"], b, gs, rep)
    cfg = EvolveConfig(dt0=float(s["dt"]), t_final=float(s["tfinal"]),
                       sample_every=float(s["sample_every"]), scheme=str(s["scheme"]),
                       reference=Reference.from_ground_state(gs))
    traj = evolve(u0, cfg, b)
    kq = gs.kinetic_h
    rows = zip(traj.times.tolist(), traj.mass_ledger.tolist(), traj.energy_ledger.tolist(),
               traj.kinetic_ledger.tolist(), traj.delta(kq).tolist(), traj.potential_ledger.tolist())
    header = ["t", "mass", "energy", "grad_l2_sq", "delta", "potential"]
    if s["out"] is None:
        _write_csv(None, header, rows)
    else:
        out = Path(s["out"])
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "trajectory.csv", header, rows)
        meta = {"b": b, "status": traj.status, "blowup_time": traj.blowup_time,
                "blowup_reason": traj.blowup_reason, "blowup_time_bound": traj.blowup_time_bound,
                "mass_drift": traj.mass_drift(), "energy_drift": traj.energy_drift(),
                "notes": traj.notes, "config": cfg.to_dict(), "data": s["data"],
                "units": {"time": "equation time", "mass": "int |u|^2 dx", "energy": "K/2 - P/4"}}
        _write_json(meta, out / "trajectory.json")
        if s["dump_states"]:
            np.savez(out / "states.npz", b=b, r_max=gs.grid.r_max, n=gs.grid.n, times=traj.times,
                     v=np.array([f.v for f in traj.states]))
    print(f"status={traj.status} samples={traj.times.size}", file=sys.stderr)


def cmd_modulate(s):
    from .ground_state import solve_ground_state
    from .modulation import (decompose_trajectory, rate_fit, strichartz_table, virial_ratio_max,
                             zeta_limit)
    from .errors import FitDomainError, InsufficientData
    from .radial_core import RadialField, make_grid
    _require(s, "traj")
    try:
        z = np.load(s["traj"])
    except (OSError, ValueError) as exc:
        raise InvalidConfiguration(f"cannot read trajectory {s['traj']}: {exc}") from exc
    b = float(s["b"]) if s["b"] is not None else float(z["b"])
    if s["b"] is not None and "b" in z and abs(float(z["b"]) - b) > 1e-14:
        raise InvalidConfiguration(f"trajectory was computed for b={float(z['b'])}")
    grid = make_grid(float(z["r_max"]), int(z["n"]))
    gs = solve_ground_state(b, grid)
    states = [RadialField.from_v(grid, v) for v in z["v"]]
    frames = decompose_trajectory(z["times"], states, gs,
                                  delta0=float(s["delta0_frac"]) * gs.kinetic_h)
    if not frames:
        raise NumericFailure("no sample admits a modulation decomposition")
    header = ["t", "zeta", "alpha", "delta", "h_h1", "g_h1", "in_window", "ortho1", "ortho2"]
    rows = [[f.row()[k] for k in header] for f in frames]
    summary = {"b": b, "n_frames": len(frames), "units": {"rates": "1/time", "time": "equation time"}}
    t = np.array([f.t for f in frames])
    d = np.array([f.delta for f in frames])
    try:
        fit = rate_fit((t, d))
        summary["delta_rate"] = {"c": fit.c, "rms_log_residual": fit.rms_log_residual}
    except FitDomainError as exc:
        summary["delta_rate"] = {"error": str(exc)}
    if d.size >= 2 and np.all(d > 0):
        rmax, win = virial_ratio_max(t, d)
        summary["virial_ratio_max"] = {"value": rmax, "window": list(win)}
    try:
        zl = zeta_limit(frames)
        summary["zeta0"] = zl.zeta0
    except InsufficientData:
        pass
    if len(frames) >= 2:
        summary["strichartz"] = strichartz_table(frames)
    if s["out"] is None:
        _write_csv(None, header, rows)
        print(json.dumps(summary, default=_default), file=sys.stderr)
    else:
        out = Path(s["out"])
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "frames.csv", header, rows)
        _write_json(summary, out / "modulation.json")


def cmd_sweep(s):
    from . import harness
    _require(s, "b")
    bs = _float_list(s["b"])
    eps = _float_list(s["epsilon"])
    configs = harness.grid_configs(bs, eps, direction=str(s["direction"]), data=str(s["data"]),
                                   r_max=float(s["rmax"]), n=int(s["n"]))
    records = harness.sweep(configs, out_dir=s["out"], workers=int(s["workers"]))
    if s["out"] is None:
        _write_csv(None, harness.ExperimentRecord.CSV_FIELDS,
                   [[r.row()[k] for k in harness.ExperimentRecord.CSV_FIELDS] for r in records])
    print(f"{len(records)} records", file=sys.stderr)


def cmd_report(s):
    from . import harness
    _require(s, "records")
    if not Path(s["records"]).is_dir():
        raise InvalidConfiguration(f"no records directory {s['records']}")
    records = harness.load_records(s["records"])
    summary = harness.emit_report(records, s["out"])
    _write_json({k: summary[k] for k in ("n_records", "counts", "totals")}, None)


COMMANDS = {"groundstate": cmd_groundstate, "spectrum": cmd_spectrum, "evolve": cmd_evolve,
            "modulate": cmd_modulate, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        settings = load_settings(args.command, args)
        COMMANDS[args.command](settings)
    except LabError as exc:
        print(f"inls-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (2, 3) else 3
    except ValueError as exc:
        print(f"inls-lab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"inls-lab: numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
