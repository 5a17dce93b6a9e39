"""Replicate benchmark for one scenario / error case, printed as a wide table.

    python3 scripts/simulation_table.py --scenario I --case 1 --n 300 --tau 0.5 --replicates 100

Each cell is mean(sd) over replicates; ISE values are scaled by 100.
"""
import argparse
import time

import numpy as np

from lsqfi.io import DEFAULT_SEED, write_rows
from lsqfi.simbench import METHOD_LABELS, ErrorCase, run_benchmark
from lsqfi.tuning import TuningGrid

METRICS = ("ise0", "ise1", "ftpr", "ftnr")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenario", default="I", choices=["I", "II", "III"])
    ap.add_argument("--case", type=int, default=1, choices=[1, 2, 3])
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--tau", type=float, default=0.5)
    ap.add_argument("--methods", nargs="+", default=list(METHOD_LABELS))
    ap.add_argument("--replicates", type=int, default=100)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--reduced-grid", action="store_true",
                    help="3 x 5 grid used by the acceptance tests instead of the full 7 x 11 grid")
    ap.add_argument("--csv", help="also write the long-format table here")
    a = ap.parse_args()

    grid = (TuningGrid((1e-6, 1e-5, 1e-4), (0.0,) + tuple(np.logspace(-4, 0, 10)[3:7]))
            if a.reduced_grid else TuningGrid())
    start = time.perf_counter()
    b = run_benchmark(a.scenario, ErrorCase(a.case, tau=a.tau), a.n, a.tau, methods=a.methods,
                      replicates=a.replicates, seed=a.seed, grid=grid, jobs=a.jobs)
    q = 1 + max((r["k"] or 0) for r in b.table)

    head = ["method"] + [f"{m}[{k}]" for m in METRICS for k in range(q)] + ["rmse_gamma"]
    print("  ".join(f"{h:>14}" for h in head))
    for label in dict.fromkeys(r["method"] for r in b.table):
        cells = [label]
        for m in METRICS + ("rmse_gamma",):
            for k in (range(q) if m != "rmse_gamma" else [None]):
                try:
                    c = b.cell(label, m, k)
                except KeyError:
                    cells.append("-")
                    continue
                s = 100 if m.startswith("ise") else 1
                cells.append("-" if c["mean"] is None else f"{s * c['mean']:.3f}({s * c['sd']:.3f})")
        print("  ".join(f"{c:>14}" for c in cells))
    print(f"\n{b.failures} failed replicates, {b.hierarchy_violations} hierarchy violations in "
          f"{b.hierarchy_fits} sparse-group fits, {time.perf_counter() - start:.0f}s")
    if a.csv:
        write_rows(a.csv, ["method", "n", "metric", "k", "mean", "sd", "count"],
                   [[r["method"], r["n"], r["metric"], r["k"], r["mean"], r["sd"], r["count"]] for r in b.table])


if __name__ == "__main__":
    main()
