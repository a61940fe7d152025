"""Run the four planar benchmarks to a fixed Ndof budget and print slope fits.

    python3 scripts/run_examples.py --out runs --budget 20000
"""

import argparse
from pathlib import Path

from pointtrack.cli import RunConfig, fit_slope, run

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="runs")
ap.add_argument("--budget", type=int, default=20_000)
ap.add_argument("--alpha", type=float, default=1.5)
ap.add_argument("--examples", type=int, nargs="+", default=[1, 2, 3, 4])
args = ap.parse_args()

for n in args.examples:
    cfg = RunConfig(example=n, alpha=args.alpha, max_iterations=400, ndof_budget=args.budget,
                    out=str(Path(args.out) / f"example{n}"))
    recs = run(cfg).records
    line = f"example {n}: {len(recs)} solves, Ndof {recs[-1].ndof}, " \
           f"E_ocp slope {fit_slope(recs, 'E_ocp', 8).slope:+.3f}"
    if n > 1:
        line += f", err slope {fit_slope(recs, 'err_total', 8).slope:+.3f}, " \
                f"effectivity {recs[-1].effectivity:.2f}"
    print(line)
