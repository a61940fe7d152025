"""Discrete pointwise tracking optimal control problem.

Minimise ``1/2 sum_z |y(z) - y_z|^2 + lam/2 ||u||^2`` over piecewise constant
controls ``a <= u <= b`` subject to the P1 Galerkin state equation.  The
adjoint is driven by Dirac sources at the observation points.

The primal-dual active set iteration works on a reduced system.  Since the
cost only sees ``#Z`` point values, the coupled optimality system collapses,
for fixed active sets, to a ``#Z x #Z`` SPD system in the mismatches
``r_z = y(z) - y_z``.  Building it costs one discrete Green's function per
observation point; after that each active-set iteration is free of PDE
solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import fem
from .linalg import DEFAULT_TOL
from .mesh import Domain, Mesh
from .quadrature import QuadratureRule

Func = Callable[[np.ndarray], np.ndarray]


class PdasError(RuntimeError):
    def __init__(self, message: str, residual: float = np.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ProblemSpec:
    """Data of one pointwise tracking problem."""

    domain: Domain
    Z: np.ndarray
    targets: np.ndarray
    a: float
    b: float
    lam: float = 1.0
    alpha: float = 1.5
    f: Func | float | None = None
    g_state: Func | float | None = None
    g_adjoint: Func | float | None = None
    exact: object | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        Z = np.asarray(self.Z, dtype=float).reshape(-1, 2)
        targets = np.asarray(self.targets, dtype=float).reshape(-1)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "targets", targets)
        if len(Z) == 0:
            raise ValueError("at least one observation point is required")
        if len(targets) != len(Z):
            raise ValueError("one target value per observation point is required")
        if not self.a < self.b:
            raise ValueError(f"control bounds must satisfy a < b, got a={self.a}, b={self.b}")
        if not self.lam > 0:
            raise ValueError("control cost lam must be positive")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha={self.alpha} outside the admissible range (0, 2)")
        if not np.all(self.domain.contains(Z, strict=True)):
            raise ValueError("observation points must lie strictly inside the domain")
        if len(Z) > 1:
            d = np.linalg.norm(Z[:, None] - Z[None, :], axis=2)
            if np.any(d[np.triu_indices(len(Z), 1)] == 0.0):
                raise ValueError("observation points must be pairwise distinct")

    def with_bounds(self, a: float, b: float) -> "ProblemSpec":
        return replace(self, a=a, b=b)


@dataclass
class PdasConfig:
    c: float | None = None  # defaults to lam
    outer_tol: float = 1e-9
    max_outer: int = 100
    linear_tol: float = DEFAULT_TOL


@dataclass
class DiscreteSolution:
    y: np.ndarray
    p: np.ndarray
    u: np.ndarray
    mu: np.ndarray
    active_lower: np.ndarray
    active_upper: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    history: list = field(default_factory=list, repr=False)


def project_control(v, a: float, b: float):
    """Pointwise projection onto [a, b]."""
    if a > b:
        raise ValueError("projection requires a <= b")
    out = np.minimum(b, np.maximum(a, v))
    return float(out) if np.ndim(out) == 0 else out


# -- state and adjoint ---------------------------------------------------------------

class Discretization:
    """Mesh-dependent operators shared by the state and adjoint solves."""

    def __init__(self, spec: ProblemSpec, mesh: Mesh, linear_tol: float = DEFAULT_TOL,
                 rule: QuadratureRule | None = None):
        self.spec = spec
        self.mesh = mesh
        self.linear_tol = linear_tol
        self.K = fem.assemble_stiffness(mesh)
        self.B = fem.control_coupling(mesh)
        self.P = fem.point_evaluation_matrix(mesh, spec.Z)
        self.f_load = fem.assemble_load(mesh, spec.f, rule=rule)
        self.g_state = fem.DirichletData.from_function(mesh, spec.g_state)
        self.g_adjoint = fem.DirichletData.from_function(mesh, spec.g_adjoint)
        self.zero_bc = fem.DirichletData(None, np.zeros(len(self.g_state.nodes)),
                                         self.g_state.nodes)
        self._green = None

    def state(self, u, x0=None) -> np.ndarray:
        load = self.f_load + self.B @ np.asarray(u, dtype=float)
        return fem.solve_dirichlet(self.K, load, self.g_state, self.mesh,
                                   tol_rel=self.linear_tol, x0=x0)

    def mismatch(self, y) -> np.ndarray:
        return self.P @ y - self.spec.targets

    def adjoint(self, y, x0=None) -> np.ndarray:
        load = self.P.T @ self.mismatch(y)
        return fem.solve_dirichlet(self.K, load, self.g_adjoint, self.mesh,
                                   tol_rel=self.linear_tol, x0=x0)

    @property
    def green(self) -> np.ndarray:
        """Discrete Green's functions, one column per observation point."""
        if self._green is None:
            cols = [fem.solve_dirichlet(self.K, self.P[i].toarray().ravel(), self.zero_bc,
                                        self.mesh, tol_rel=self.linear_tol)
                    for i in range(self.P.shape[0])]
            self._green = np.stack(cols, axis=1)
        return self._green


def solve_state(spec: ProblemSpec, mesh: Mesh, u, tol_rel: float = DEFAULT_TOL) -> np.ndarray:
    return Discretization(spec, mesh, tol_rel).state(u)


def solve_adjoint(spec: ProblemSpec, mesh: Mesh, y, tol_rel: float = DEFAULT_TOL) -> np.ndarray:
    return Discretization(spec, mesh, tol_rel).adjoint(y)


# -- PDAS ------------------------------------------------------------------------

def _stationarity_residual(u, pbar, lam, a, b, lower, upper) -> float:
    g = pbar + lam * u
    inactive = ~(lower | upper)
    parts = [0.0]
    if np.any(inactive):
        parts.append(np.max(np.abs(g[inactive])))
    # sign conditions of the multiplier on the active sets
    if np.any(lower):
        parts.append(np.max(np.maximum(0.0, -g[lower])))
        parts.append(np.max(np.abs(u[lower] - a)))
    if np.any(upper):
        parts.append(np.max(np.maximum(0.0, g[upper])))
        parts.append(np.max(np.abs(u[upper] - b)))
    return float(max(parts))


def pdas_solve(spec: ProblemSpec, mesh: Mesh, cfg: PdasConfig | None = None,
               warm_start: DiscreteSolution | None = None,
               disc: Discretization | None = None) -> DiscreteSolution:
    """Primal-dual active set method for the discrete control problem.

    Active sets follow ``mu + c (u - a) < 0`` (lower) and
    ``mu + c (u - b) > 0`` (upper) with ``mu = -(avg(p) + lam u)``.  For
    fixed sets the coupled system is solved through the reduced
    observation-space system described in the module docstring.
    """
    cfg = cfg or PdasConfig()
    disc = disc or Discretization(spec, mesh, cfg.linear_tol)
    lam, a, b = spec.lam, spec.a, spec.b
    c = lam if cfg.c is None else cfg.c
    if c <= 0:
        raise ValueError("PDAS parameter c must be positive")
    area = mesh.areas

    # affine pieces: y = y0 + S u, p = p_g + sum_z r_z w_z
    y0 = disc.state(np.zeros(mesh.n_elements))
    d0 = disc.mismatch(y0)
    W_green = disc.green
    W = W_green[mesh.elements].mean(axis=1)  # (ne, nZ): avg_T(w_z)
    C = (W * area[:, None]).T  # (nZ, ne): (S e_T)(z)
    if disc.g_adjoint.homogeneous:
        pg_avg = np.zeros(mesh.n_elements)
    else:
        pg = fem.solve_dirichlet(disc.K, np.zeros(mesh.n_vertices), disc.g_adjoint,
                                 mesh, tol_rel=cfg.linear_tol)
        pg_avg = pg[mesh.elements].mean(axis=1)

    if warm_start is not None:
        u = project_control(np.asarray(warm_start.u, dtype=float), a, b)
        mu = np.asarray(warm_start.mu, dtype=float)
    else:
        u = np.full(mesh.n_elements, project_control(0.0, a, b))
        mu = np.zeros(mesh.n_elements)
    lower = mu + c * (u - a) < 0
    upper = (mu + c * (u - b) > 0) & ~lower

    seen: dict[bytes, int] = {}
    history = []
    nz = len(spec.Z)
    for it in range(1, cfg.max_outer + 1):
        key = np.packbits(lower).tobytes() + b"|" + np.packbits(upper).tobytes()
        if key in seen and seen[key] != it - 1:
            raise PdasError(f"active sets cycle with period {it - seen[key]}")
        seen[key] = it

        inactive = ~(lower | upper)
        u_act = np.where(lower, a, np.where(upper, b, 0.0))
        WI = W[inactive]
        # (I + C_I W_I / lam) r = d0 + C_A u_A - C_I pg_I / lam
        M = np.eye(nz) + (C[:, inactive] @ WI) / lam
        rhs = d0 + C @ u_act - C[:, inactive] @ pg_avg[inactive] / lam
        r = np.linalg.solve(M, rhs)
        pbar = pg_avg + W @ r
        u = np.where(inactive, -pbar / lam, u_act)
        mu = -(pbar + lam * u)
        mu[inactive] = 0.0
        res = _stationarity_residual(u, pbar, lam, a, b, lower, upper)
        new_lower = mu + c * (u - a) < 0
        new_upper = (mu + c * (u - b) > 0) & ~new_lower
        history.append(dict(iteration=it, n_lower=int(lower.sum()),
                            n_upper=int(upper.sum()), residual=res))
        if np.array_equal(new_lower, lower) and np.array_equal(new_upper, upper):
            break
        lower, upper = new_lower, new_upper
    else:
        raise PdasError(f"PDAS did not converge in {cfg.max_outer} iterations", res)

    y = disc.state(u)
    p = disc.adjoint(y)
    # polish: fixed-point correction against linear-solver error
    for _ in range(20):
        pbar = p[mesh.elements].mean(axis=1)
        res = _stationarity_residual(u, pbar, lam, a, b, lower, upper)
        if res <= cfg.outer_tol:
            break
        inactive = ~(lower | upper)
        u = np.where(inactive, project_control(-pbar / lam, a, b), u)
        y = disc.state(u, x0=y)
        p = disc.adjoint(y, x0=p)
    else:
        raise PdasError("stationarity residual above tolerance after polishing", res)
    pbar = p[mesh.elements].mean(axis=1)
    mu = -(pbar + lam * u)
    mu[~(lower | upper)] = 0.0
    return DiscreteSolution(y=y, p=p, u=u, mu=mu, active_lower=lower, active_upper=upper,
                            iterations=it, residual=res, history=history)


def vi_residual(spec: ProblemSpec, mesh: Mesh, sol: DiscreteSolution, direction) -> float:
    """``(p + lam u, u' - u)_{L2}`` for a feasible P0 field ``u'``."""
    pbar = sol.p[mesh.elements].mean(axis=1)
    return float(np.sum(mesh.areas * (pbar + spec.lam * sol.u) * (direction - sol.u)))


def compute_cost(spec: ProblemSpec, mesh: Mesh, sol: DiscreteSolution) -> float:
    mismatch = np.array([fem.eval_p1(sol.y, mesh, z) for z in spec.Z]) - spec.targets
    return float(0.5 * np.sum(mismatch**2)
                 + 0.5 * spec.lam * np.sum(mesh.areas * np.asarray(sol.u) ** 2))
