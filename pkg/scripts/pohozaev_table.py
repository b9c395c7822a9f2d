"""Ground-state identities, decay fit and unstable rate across b.

    python3 scripts/pohozaev_table.py --b 0.1 0.25 0.5 0.75 0.9 --out pohozaev.csv
"""
import argparse
import csv
import sys
import time

from inls_lab.ground_state import decay_fit, solve_ground_state
from inls_lab.linearized import assemble, spectrum
from inls_lab.radial_core import make_grid


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--b", type=float, nargs="+", default=[0.1, 0.25, 0.5, 0.75, 0.9])
    p.add_argument("--rmax", type=float, default=60.0)
    p.add_argument("--n", type=int, default=5999)
    p.add_argument("--out", default=None)
    a = p.parse_args()
    grid = make_grid(a.rmax, a.n)
    header = ["b", "q0", "K/M_err", "P/M_err", "E/M_err", "decay_rate", "decay_power",
              "unstable_rate", "seconds"]
    fh = open(a.out, "w", newline="", encoding="utf-8") if a.out else sys.stdout
    w = csv.writer(fh)
    w.writerow(header)
    for b in a.b:
        t0 = time.perf_counter()
        gs = solve_ground_state(b, grid)
        dt = time.perf_counter() - t0
        err = gs.pohozaev_errors()
        rate, power = decay_fit(gs)
        e0 = spectrum(assemble(b, gs)).unstable_rate
        w.writerow([b, f"{gs.q0:.12g}", f"{err['K/M']:.3e}", f"{err['P/M']:.3e}",
                    f"{err['E/M']:.3e}", f"{rate:.5f}", f"{power:.4f}", f"{e0:.6g}", f"{dt:.2f}"])
    if a.out:
        fh.close()


if __name__ == "__main__":
    main()
