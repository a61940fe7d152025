"""Marking strategies and the solve-estimate-mark-refine loop."""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .errors import effectivity, error_report
from .estimator import IndicatorField, compute_indicators, log_factor, oscillation
from .mesh import Mesh, check_patch_assumption, refine_with_transfer
from .ocp import DiscreteSolution, Discretization, PdasConfig, ProblemSpec, compute_cost, pdas_solve
from .quadrature import get_rule

log = logging.getLogger(__name__)


class Strategy(enum.Enum):
    MAXIMUM = "maximum"
    BULK = "bulk"
    AVERAGE = "average"


@dataclass(frozen=True)
class MarkingStrategy:
    kind: Strategy = Strategy.MAXIMUM
    theta: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", Strategy(self.kind))
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")


def mark(combined_sq, strategy: MarkingStrategy = MarkingStrategy()) -> np.ndarray:
    """Element ids selected for refinement, in increasing order.

    Maximum: ``E^2 > 0.5 max E^2``.  Average: ``E^2 >= mean E^2``.  Bulk
    (Doerfler): smallest set, taken largest-first with ties to the lower id,
    whose squared indicators reach ``theta`` times the total.
    """
    e = np.asarray(combined_sq, dtype=float)
    if e.size == 0 or not np.any(e > 0):
        return np.zeros(0, dtype=np.int64)
    if strategy.kind is Strategy.MAXIMUM:
        return np.flatnonzero(e > 0.5 * e.max())
    if strategy.kind is Strategy.AVERAGE:
        return np.flatnonzero(e >= e.mean())
    order = np.lexsort((np.arange(e.size), -e))
    csum = np.cumsum(e[order])
    k = int(np.searchsorted(csum, strategy.theta * csum[-1] * (1 - 1e-14))) + 1
    return np.sort(order[:k])


@dataclass
class LoopConfig:
    max_iterations: int = 25
    ndof_budget: int = 10**9
    strategy: MarkingStrategy = field(default_factory=MarkingStrategy)
    uniform: bool = False
    point_attribution: str = "closed"
    quadrature_degree: int = 8

    def __post_init__(self):
        if self.max_iterations < 0 or self.ndof_budget <= 0:
            raise ValueError("budgets must be positive")


@dataclass
class ConvergenceRecord:
    iteration: int
    ndof: int
    n_elements: int
    E_y: float
    E_p: float
    E_u: float
    E_ocp: float
    osc: float
    ell: float
    err_y: float = float("nan")
    err_p: float = float("nan")
    err_u: float = float("nan")
    err_total: float = float("nan")
    effectivity: float = float("nan")
    cost: float = float("nan")

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


def count_dofs(mesh: Mesh) -> int:
    return int(2 * np.count_nonzero(~mesh.boundary_vertices) + mesh.n_elements)


@dataclass
class LoopResult:
    records: list[ConvergenceRecord]
    mesh: Mesh
    solution: DiscreteSolution
    indicators: IndicatorField


def adaptive_loop(spec: ProblemSpec, mesh0: Mesh, cfg: LoopConfig | None = None,
                  pdas: PdasConfig | None = None,
                  callback: Callable | None = None) -> LoopResult:
    """Run the adaptive loop; one record per solve, iteration 0 on ``mesh0``.

    ``callback(iteration, mesh, solution, indicators, record)`` is invoked
    after each solve (used for per-iteration dumps).
    """
    cfg = cfg or LoopConfig()
    pdas = pdas or PdasConfig()
    rule = get_rule(cfg.quadrature_degree)
    mesh = mesh0
    records: list[ConvergenceRecord] = []
    warm = None
    it = 0
    while True:
        if not check_patch_assumption(mesh, spec.Z):
            raise RuntimeError(f"patch assumption violated at iteration {it}")
        disc = Discretization(spec, mesh, pdas.linear_tol, rule)
        sol = pdas_solve(spec, mesh, pdas, warm_start=warm, disc=disc)
        ind = compute_indicators(mesh, spec, sol, rule, attribution=cfg.point_attribution)
        rec = ConvergenceRecord(
            iteration=it, ndof=count_dofs(mesh), n_elements=mesh.n_elements,
            E_y=ind.global_y, E_p=ind.global_p, E_u=ind.global_u, E_ocp=ind.global_ocp,
            osc=oscillation(mesh, spec.f, rule), ell=log_factor(mesh),
            cost=compute_cost(spec, mesh, sol))
        if spec.exact is not None:
            rep = error_report(mesh, spec, sol, rule)
            rec.err_y, rec.err_p, rec.err_u = rep.err_y, rep.err_p, rep.err_u
            rec.err_total = rep.err_total
            rec.effectivity = effectivity(rep, ind)
        records.append(rec)
        log.info("it=%d ndof=%d E_ocp=%.4e err=%.4e", it, rec.ndof, rec.E_ocp, rec.err_total)
        if callback is not None:
            callback(it, mesh, sol, ind, rec)
        if it >= cfg.max_iterations or rec.ndof >= cfg.ndof_budget:
            break
        if cfg.uniform:
            marked = np.arange(mesh.n_elements)
        else:
            marked = mark(ind.combined_sq, cfg.strategy)
        if len(marked) == 0:
            break
        mesh, transfer = refine_with_transfer(mesh, marked)
        warm = DiscreteSolution(
            y=transfer.prolong_p1(sol.y), p=transfer.prolong_p1(sol.p),
            u=transfer.prolong_p0(sol.u), mu=transfer.prolong_p0(sol.mu),
            active_lower=transfer.prolong_p0(sol.active_lower),
            active_upper=transfer.prolong_p0(sol.active_upper))
        it += 1
    return LoopResult(records, mesh, sol, ind)
