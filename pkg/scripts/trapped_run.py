"""Run near the stable manifold of Q and compare the fitted rates with the unstable eigenvalue.

    python3 scripts/trapped_run.py --b 0.75 --eps -0.02 --out runs/trapped_075
"""
import argparse
import json

from inls_lab import harness


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--b", type=float, default=0.3)
    p.add_argument("--eps", type=float, default=-0.02)
    p.add_argument("--n", type=int, nargs="+", default=[5999])
    p.add_argument("--out", default=None)
    a = p.parse_args()
    recs = []
    for n in a.n:
        cfg = harness.ExperimentConfig(b=a.b, epsilon=a.eps, data="trapped", n=n)
        rec = harness.run_experiment(cfg)
        recs.append(rec)
        r = rec.rates
        print(json.dumps({"n": n, "classification": rec.classification,
                          "delta_rate": r.get("delta_rate"), "delta_rms": r.get("delta_rms"),
                          "alpha_rate": r.get("alpha_rate"), "unstable_rate": r.get("unstable_rate"),
                          "zeta0": r.get("zeta0"), "zeta_cauchy_rate": r.get("zeta_cauchy_rate"),
                          "virial_ratio_max": rec.virial.get("ratio_max"),
                          "runtime_s": round(rec.runtime, 1)}))
    if a.out:
        harness.write_records(recs, a.out)
        harness.emit_report(recs, a.out)


if __name__ == "__main__":
    main()
