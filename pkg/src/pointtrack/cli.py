"""Experiment runner.

    pointtrack --example 2 --max-iters 20 --out runs/ex2
    pointtrack --config ex1.cfg --uniform

A config file holds ``key = value`` lines (``#`` starts a comment) with the
field names of :class:`RunConfig`; command-line flags override it.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import dump
from .adapt import ConvergenceRecord, LoopConfig, MarkingStrategy, adaptive_loop
from .errors import make_example
from .mesh import Domain, build_initial_mesh, prerefine_for_observations
from .ocp import PdasConfig

log = logging.getLogger(__name__)

SLOPE_COLUMNS = ("E_ocp", "E_y", "E_p", "E_u", "err_total", "err_y", "err_p", "err_u")


@dataclass(frozen=True)
class RunConfig:
    example: int = 2
    alpha: float = 1.5
    marking: str = "maximum"
    theta: float = 0.5
    max_iterations: int = 25
    ndof_budget: int = 10**9
    uniform: bool = False
    out: str = "out"
    subdivisions: int = 0  # 0: two for the square, one for the L-shape
    quadrature_degree: int = 8
    linear_tol: float = 1e-10
    outer_tol: float = 1e-9
    max_outer: int = 100
    slope_window: int = 8
    dump_every: int = 0  # 0: final iteration only
    attribution: str = "closed"
    seed: int = 0  # only consumed by the property tests

    def __post_init__(self):
        if self.example not in (1, 2, 3, 4):
            raise ValueError(f"example must be 1-4, got {self.example}")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha={self.alpha} outside the admissible range (0, 2)")
        if self.slope_window < 3:
            raise ValueError("slope_window must be at least 3")
        MarkingStrategy(self.marking, self.theta)
        LoopConfig(self.max_iterations, self.ndof_budget)


_ALIASES = {"max-iters": "max_iterations", "max_iters": "max_iterations",
            "ndof-budget": "ndof_budget", "uniform_mode": "uniform"}


def _convert(name: str, text: str):
    kind = type(getattr(RunConfig, name))
    if kind is bool:
        low = text.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"{name}: cannot read {text!r} as a boolean")
        return low in ("1", "true", "yes", "on")
    if kind is int:
        return int(float(text)) if "e" in text.lower() else int(text)
    return kind(text.strip())


def parse_config_text(text: str) -> dict:
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key.replace("-", "_"))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


@dataclass(frozen=True)
class SlopeFit:
    column: str
    slope: float
    intercept: float
    k: int


def fit_slope(records, column: str = "E_ocp", k: int = 8) -> SlopeFit:
    """Least-squares slope of log(value) against log(Ndof) over the last ``k`` records."""
    if k < 3:
        raise ValueError("slope fit needs k >= 3")
    if len(records) < k:
        raise ValueError(f"need at least {k} records, have {len(records)}")
    tail = records[-k:]
    ndof = np.array([r.ndof if hasattr(r, "ndof") else r["ndof"] for r in tail], dtype=float)
    vals = np.array([getattr(r, column) if hasattr(r, column) else r[column] for r in tail],
                    dtype=float)
    if not np.all(vals > 0) or not np.all(ndof > 0):
        raise ValueError(f"{column}: slope fit needs positive values")
    slope, intercept = np.polyfit(np.log(ndof), np.log(vals), 1)
    return SlopeFit(column, float(slope), float(intercept), k)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_convergence(path, records) -> None:
    cols = ConvergenceRecord.columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in cols])


def write_slopes(path, records, k: int) -> list[SlopeFit]:
    k = min(k, len(records))
    fits = []
    lines = ["column slope k"]
    for col in SLOPE_COLUMNS:
        vals = [getattr(r, col) for r in records[-k:]]
        if k < 3 or not all(math.isfinite(v) and v > 0 for v in vals):
            continue
        fit = fit_slope(records, col, k)
        fits.append(fit)
        lines.append(f"{col} {fit.slope:.17g} {k}")
    Path(path).write_text("\n".join(lines) + "\n")
    return fits


def initial_mesh(cfg: RunConfig, spec):
    s = cfg.subdivisions or (2 if spec.domain is Domain.UNIT_SQUARE else 1)
    return prerefine_for_observations(build_initial_mesh(spec.domain, s), spec.Z)


def run(cfg: RunConfig):
    """Run one experiment and write its outputs to ``cfg.out``."""
    spec = make_example(cfg.example, cfg.alpha)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    loop = LoopConfig(max_iterations=cfg.max_iterations, ndof_budget=cfg.ndof_budget,
                      strategy=MarkingStrategy(cfg.marking, cfg.theta), uniform=cfg.uniform,
                      point_attribution=cfg.attribution,
                      quadrature_degree=cfg.quadrature_degree)
    pdas = PdasConfig(outer_tol=cfg.outer_tol, max_outer=cfg.max_outer,
                      linear_tol=cfg.linear_tol)

    def save(it, mesh, sol, ind):
        tag = f"{it:04d}"
        dump.write_mesh(out / f"mesh_{tag}.txt", mesh)
        dump.write_vtk(out / f"fields_{tag}.vtk", mesh,
                       point_data={"y": sol.y, "p": sol.p},
                       cell_data={"u": sol.u, "E_y": ind.E_y, "E_p": ind.E_p,
                                  "E_u": ind.E_u})
        dump.write_indicators(out / f"indicators_{tag}.csv", ind)

    def callback(it, mesh, sol, ind, rec):
        if cfg.dump_every and it % cfg.dump_every == 0:
            save(it, mesh, sol, ind)

    result = adaptive_loop(spec, initial_mesh(cfg, spec), loop, pdas, callback)
    last = result.records[-1].iteration
    if not cfg.dump_every or last % cfg.dump_every:
        save(last, result.mesh, result.solution, result.indicators)
    write_convergence(out / "convergence.csv", result.records)
    write_slopes(out / "slopes.txt", result.records, cfg.slope_window)
    return result


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pointtrack", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key = value file")
    ap.add_argument("--example", type=int)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--marking", choices=["maximum", "bulk", "average"])
    ap.add_argument("--theta", type=float)
    ap.add_argument("--max-iters", dest="max_iterations", type=int)
    ap.add_argument("--ndof-budget", dest="ndof_budget", type=int)
    ap.add_argument("--uniform", action="store_const", const=True)
    ap.add_argument("--out")
    ap.add_argument("--subdivisions", type=int)
    ap.add_argument("--quadrature-degree", dest="quadrature_degree", type=int)
    ap.add_argument("--linear-tol", dest="linear_tol", type=float)
    ap.add_argument("--dump-every", dest="dump_every", type=int)
    ap.add_argument("--attribution", choices=["closed", "lowest"])
    ap.add_argument("--seed", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(argv=None) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return replace(RunConfig(), **values) if values else RunConfig(), args.verbose


def main(argv=None) -> int:
    try:
        cfg, verbose = config_from_args(argv)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        result = run(cfg)
    except (ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"pointtrack: error: {exc}", file=sys.stderr)
        return 1
    rec = result.records[-1]
    print(f"{len(result.records)} iterations, Ndof={rec.ndof}, E_ocp={rec.E_ocp:.6e}; "
          f"output in {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
