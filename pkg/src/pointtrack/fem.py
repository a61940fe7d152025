"""P1/P0 finite element spaces on a :class:`~pointtrack.mesh.Mesh`.

Fields are plain numpy arrays: a P1 field holds one value per vertex, a P0
field one value per element.  Callables (forcing, boundary data, exact
solutions) take an array of points of shape ``(..., 2)`` and return an
array of shape ``(...)``; plain numbers are accepted as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import DEFAULT_TOL, SparseSym, assemble_from_triplets, cg_solve
from .mesh import Mesh
from .quadrature import QuadratureRule, get_rule


class DegenerateElementError(ValueError):
    pass


def evaluate(f, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if f is None:
        return np.zeros(x.shape[:-1])
    if callable(f):
        return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape[:-1])
    return np.full(x.shape[:-1], float(f))


def interpolate(mesh: Mesh, g) -> np.ndarray:
    """Nodal P1 interpolant."""
    return np.array(evaluate(g, mesh.vertices), dtype=float)


# -- element matrices and assembly ---------------------------------------------

def element_stiffness(corners) -> np.ndarray:
    """Closed-form P1 stiffness matrix of one triangle given its 3x2 corners."""
    p = np.asarray(corners, dtype=float)
    edges = np.array([p[2] - p[1], p[0] - p[2], p[1] - p[0]])
    area = 0.5 * (edges[2, 0] * (-edges[1, 1]) - edges[2, 1] * (-edges[1, 0]))
    if area <= 0:
        raise DegenerateElementError(f"element has non-positive area {area}")
    return edges @ edges.T / (4.0 * area)


def _check_areas(mesh: Mesh):
    if np.any(mesh.areas <= 0):
        bad = int(np.argmin(mesh.areas))
        raise DegenerateElementError(f"element {bad} has non-positive area {mesh.areas[bad]}")


def local_stiffness(mesh: Mesh) -> np.ndarray:
    """All element stiffness matrices, shape (ne, 3, 3)."""
    _check_areas(mesh)
    G = mesh.barycentric_gradients
    return mesh.areas[:, None, None] * np.einsum("eid,ejd->eij", G, G)


def assemble_stiffness(mesh: Mesh) -> SparseSym:
    Ke = local_stiffness(mesh)
    e = mesh.elements
    rows = np.repeat(e, 3, axis=1).ravel()
    cols = np.tile(e, (1, 3)).ravel()
    return assemble_from_triplets(mesh.n_vertices, rows, cols, Ke.ravel())


def control_coupling(mesh: Mesh) -> sp.csr_matrix:
    """Matrix B with B[i, T] = integral of phi_i over T = |T|/3."""
    ne = mesh.n_elements
    cols = np.repeat(np.arange(ne), 3)
    vals = np.repeat(mesh.areas / 3.0, 3)
    return sp.csr_matrix((vals, (mesh.elements.ravel(), cols)),
                         shape=(mesh.n_vertices, ne))


def quadrature_points(mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    return rule.physical_points(mesh.vertices[mesh.elements])


def assemble_load(mesh: Mesh, f=None, u=None, rule: QuadratureRule | None = None) -> np.ndarray:
    """Load vector of ``(f + u, phi_i)`` with P0 control ``u``."""
    rule = rule or get_rule()
    fq = evaluate(f, quadrature_points(mesh, rule))
    if u is not None:
        fq = fq + np.asarray(u, dtype=float)[:, None]
    # contributions: |T| * sum_q w_q f(x_q) lambda_k(x_q)
    local = mesh.areas[:, None] * np.einsum("eq,q,qk->ek", fq, rule.weights, rule.points)
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(),
                       minlength=mesh.n_vertices)


def assemble_dirac_load(mesh: Mesh, Z, coefficients) -> np.ndarray:
    """Vector with entries ``sum_z c_z phi_i(z)``."""
    out = np.zeros(mesh.n_vertices)
    for z, c in zip(np.asarray(Z, dtype=float).reshape(-1, 2), np.atleast_1d(coefficients)):
        t, lam = mesh.locate(z)
        np.add.at(out, mesh.elements[t], c * lam)
    return out


def point_evaluation_matrix(mesh: Mesh, Z) -> sp.csr_matrix:
    """(nZ, nv) matrix whose rows evaluate a P1 field at each point."""
    rows, cols, vals = [], [], []
    for i, z in enumerate(np.asarray(Z, dtype=float).reshape(-1, 2)):
        t, lam = mesh.locate(z)
        rows += [i] * 3
        cols += list(mesh.elements[t])
        vals += list(lam)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(rows) // 3, mesh.n_vertices))


# -- Dirichlet problems ------------------------------------------------------------

@dataclass(frozen=True)
class DirichletData:
    g: object
    values: np.ndarray  # values at boundary vertices, in vertex order
    nodes: np.ndarray  # boundary vertex ids

    @classmethod
    def from_function(cls, mesh: Mesh, g=None) -> "DirichletData":
        nodes = np.flatnonzero(mesh.boundary_vertices)
        values = evaluate(g, mesh.vertices[nodes])
        return cls(g, np.array(values, dtype=float), nodes)

    @property
    def homogeneous(self) -> bool:
        return not np.any(self.values)


def solve_dirichlet(A: SparseSym, load, g: DirichletData, mesh: Mesh,
                    tol_rel: float = DEFAULT_TOL, x0=None) -> np.ndarray:
    """Solve ``A x = load`` with ``x = g`` on the boundary.

    Boundary values are moved to the right-hand side; the interior block is
    solved with Jacobi-preconditioned CG.
    """
    n = mesh.n_vertices
    x = np.zeros(n)
    x[g.nodes] = g.values
    interior = np.flatnonzero(~mesh.boundary_vertices)
    if len(interior) == 0:
        return x
    csr = A.csr if isinstance(A, SparseSym) else A
    A_ii = csr[interior][:, interior]
    rhs = np.asarray(load, dtype=float)[interior]
    if not g.homogeneous:
        rhs = rhs - csr[interior][:, g.nodes] @ g.values
    start = None if x0 is None else np.asarray(x0)[interior]
    x[interior] = cg_solve(SparseSym(A_ii, check=False), rhs, tol_rel=tol_rel, x0=start)
    return x


# -- projections and evaluation ------------------------------------------------

def p0_projection(mesh: Mesh, f, rule: QuadratureRule | None = None) -> np.ndarray:
    """Element means of ``f`` computed by quadrature."""
    rule = rule or get_rule()
    return evaluate(f, quadrature_points(mesh, rule)) @ rule.weights


def p1_at_quadrature(field, mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    return np.asarray(field)[mesh.elements] @ rule.points.T


def p1_gradients(field, mesh: Mesh) -> np.ndarray:
    """Elementwise constant gradient of a P1 field, shape (ne, 2)."""
    return np.einsum("ek,ekd->ed", np.asarray(field)[mesh.elements],
                     mesh.barycentric_gradients)


def eval_p1(field, mesh: Mesh, x) -> float:
    t, lam = mesh.locate(x)
    return float(np.asarray(field)[mesh.elements[t]] @ lam)


def element_avg_p1(field, mesh: Mesh, T=None):
    """Element mean of a P1 field: the average of its three nodal values."""
    avg = np.asarray(field)[mesh.elements].mean(axis=1)
    return avg if T is None else float(avg[T])


def l2_norm_p0(mesh: Mesh, u) -> float:
    return float(np.sqrt(np.sum(mesh.areas * np.asarray(u) ** 2)))


def l2_error(mesh: Mesh, field, exact, rule: QuadratureRule | None = None) -> float:
    """L2 norm of ``field - exact`` for a P1 field."""
    rule = rule or get_rule()
    diff = p1_at_quadrature(field, mesh, rule) - evaluate(exact, quadrature_points(mesh, rule))
    return float(np.sqrt(np.sum(mesh.areas * (diff**2 @ rule.weights))))
