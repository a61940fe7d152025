"""Adaptive against uniform refinement on Example 1 (estimator decay).

Writes both convergence tables and prints E_ocp at matching Ndof.
"""

import argparse
from pathlib import Path

import numpy as np

from pointtrack.cli import RunConfig, fit_slope, run

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="runs/compare")
ap.add_argument("--budget", type=int, default=20_000)
args = ap.parse_args()

res = {}
for mode in ("adaptive", "uniform"):
    cfg = RunConfig(example=1, max_iterations=400, ndof_budget=args.budget,
                    uniform=mode == "uniform", out=str(Path(args.out) / mode))
    res[mode] = run(cfg).records

for mode, recs in res.items():
    print(f"{mode:9s} slope {fit_slope(recs, 'E_ocp', 8).slope:+.3f}")

ad = res["adaptive"]
print(f"{'Ndof':>8s} {'uniform':>12s} {'adaptive':>12s}")
for r in res["uniform"]:
    # adaptive estimator interpolated in log-log at the uniform Ndof
    x = np.log([a.ndof for a in ad])
    y = np.log([a.E_ocp for a in ad])
    if x[0] <= np.log(r.ndof) <= x[-1]:
        print(f"{r.ndof:8d} {r.E_ocp:12.4e} {np.exp(np.interp(np.log(r.ndof), x, y)):12.4e}")
