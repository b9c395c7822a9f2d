"""Threshold trichotomy: eps = +0.05 / 0 / -0.05 along the unstable direction for several b.

Writes records.csv, record_XXX.json and the report files under --out.

    python3 scripts/trichotomy_matrix.py --out runs/trichotomy
"""
import argparse
import time

from inls_lab import harness


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--b", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    p.add_argument("--eps", type=float, nargs="+", default=[0.05, 0.0, -0.05])
    p.add_argument("--n", type=int, default=5999)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="runs/trichotomy")
    a = p.parse_args()
    t0 = time.perf_counter()
    cfgs = harness.grid_configs(a.b, a.eps, n=a.n)
    recs = harness.sweep(cfgs, a.out, workers=a.workers)
    summary = harness.emit_report(recs, a.out)
    for c, r in zip(cfgs, recs):
        print(f"b={c.b:<5} eps={c.epsilon:+.3f}  {r.classification:<19} {r.status:<24} "
              f"{r.runtime:6.1f}s  {r.error or ''}")
    print("totals", summary["totals"], f"({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
