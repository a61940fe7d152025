"""A posteriori indicators for the pointwise tracking problem.

Three contributions per element:

* ``E_y`` -- maximum-norm residual indicator for the state,
* ``E_p`` -- weighted residual indicator for the adjoint with Dirac data,
* ``E_u`` -- distance of the discrete control to the projected adjoint.

Their squares add up to the marking quantity; the global estimator is
``max E_y + l2(E_p) + l2(E_u)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .mesh import Domain, Geometry, Mesh, compute_geometry
from .ocp import ProblemSpec, project_control
from .quadrature import QuadratureRule, get_rule


@dataclass(frozen=True)
class WeightRho:
    Z: np.ndarray
    alpha: float
    d_Z: float

    @classmethod
    def for_points(cls, Z, alpha: float, domain: Domain | str) -> "WeightRho":
        Z = np.asarray(Z, dtype=float).reshape(-1, 2)
        d = float(np.min(Domain(domain).boundary_distance(Z)))
        if len(Z) > 1:
            pair = np.linalg.norm(Z[:, None] - Z[None, :], axis=2)
            d = min(d, float(np.min(pair[np.triu_indices(len(Z), 1)])))
        if d <= 0:
            raise ValueError("observation points must be interior and distinct")
        return cls(Z, float(alpha), d)


def eval_rho(w: WeightRho, x) -> np.ndarray:
    """Weight at points ``x`` of shape (..., 2).

    With one point this is ``|x - z|^alpha``.  With several points the
    power is used inside the balls of radius ``d_Z/2`` and the weight is 1
    elsewhere (the switch is discontinuous, as in the definition).
    """
    x = np.asarray(x, dtype=float)
    dist = np.linalg.norm(x[..., None, :] - w.Z, axis=-1)  # (..., nZ)
    if len(w.Z) == 1:
        return dist[..., 0] ** w.alpha
    near = dist.min(axis=-1)
    return np.where(near < 0.5 * w.d_Z, near**w.alpha, 1.0)


# -- jumps ---------------------------------------------------------------------

def edge_normals(mesh: Mesh) -> np.ndarray:
    """Unit normal of each side pointing out of its first (left) element."""
    v = mesh.vertices[mesh.edges]
    d = v[:, 1] - v[:, 0]
    n = np.stack([d[:, 1], -d[:, 0]], axis=1) / np.linalg.norm(d, axis=1)[:, None]
    left = mesh.edge_elements[:, 0]
    outward = np.einsum("ij,ij->i", n, v.mean(axis=1) - mesh.barycenters[left])
    return n * np.where(outward < 0, -1.0, 1.0)[:, None]


def compute_jumps(mesh: Mesh, v) -> np.ndarray:
    """Normal-derivative jump of a P1 field on every side (0 on the boundary)."""
    grad = fem.p1_gradients(v, mesh)
    left, right = mesh.edge_elements.T
    interior = right >= 0
    nu = edge_normals(mesh)
    jumps = np.zeros(len(mesh.edges))
    diff = grad[left[interior]] - grad[right[interior]]
    jumps[interior] = np.einsum("ij,ij->i", diff, nu[interior])
    return jumps


def _sample_points(mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Quadrature nodes plus vertices of each element, (ne, nq + 3, 2)."""
    corners = mesh.vertices[mesh.elements]
    return np.concatenate([fem.quadrature_points(mesh, rule), corners], axis=1)


def _sup_abs(f, u, mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    vals = fem.evaluate(f, _sample_points(mesh, rule))
    if u is not None:
        vals = vals + np.asarray(u)[:, None]
    return np.abs(vals).max(axis=1)


# -- indicators ------------------------------------------------------------------

def indicator_state(mesh: Mesh, spec: ProblemSpec, y, u, rule: QuadratureRule | None = None,
                    jumps=None) -> np.ndarray:
    rule = rule or get_rule()
    h = mesh.diameters
    jumps = compute_jumps(mesh, y) if jumps is None else jumps
    side_sup = np.abs(jumps)[mesh.element_edges].max(axis=1)
    return h**2 * _sup_abs(spec.f, u, mesh, rule) + h * side_sup


def attribute_observations(mesh: Mesh, Z) -> np.ndarray:
    """Lowest-id element whose closure holds each point (-1 if outside the mesh)."""
    out = []
    for z in np.asarray(Z, dtype=float).reshape(-1, 2):
        hits = mesh.containing_elements(z)
        out.append(hits.min() if len(hits) else -1)
    return np.array(out, dtype=np.int64)


def observation_owners(mesh: Mesh, Z, attribution: str = "closed"):
    """Pairs (point index, element) that receive a point-mismatch term.

    ``"closed"`` gives the term to every element whose closure contains the
    point; ``"lowest"`` gives it to the lowest-id such element only.
    """
    if attribution == "lowest":
        owners = attribute_observations(mesh, Z)
        which = np.flatnonzero(owners >= 0)
        return which, owners[which]
    if attribution != "closed":
        raise ValueError(f"unknown attribution {attribution!r}")
    pts, elems = [], []
    for i, z in enumerate(np.asarray(Z, dtype=float).reshape(-1, 2)):
        hits = mesh.containing_elements(z)
        pts += [i] * len(hits)
        elems += list(hits)
    return np.array(pts, dtype=np.int64), np.array(elems, dtype=np.int64)


def indicator_adjoint(mesh: Mesh, spec: ProblemSpec, p, y,
                      geometry: Geometry | None = None, jumps=None,
                      attribution: str = "closed") -> np.ndarray:
    geometry = geometry or compute_geometry(mesh, spec.Z)
    h = geometry.h
    jumps = compute_jumps(mesh, p) if jumps is None else jumps
    side_l2sq = (jumps**2 * mesh.edge_lengths)[mesh.element_edges].sum(axis=1)
    Esq = h * geometry.D**spec.alpha * side_l2sq
    which, owners = observation_owners(mesh, spec.Z, attribution)
    if len(owners):
        # points outside the mesh own no element and contribute nothing
        mismatch = np.array([fem.eval_p1(y, mesh, spec.Z[i]) - spec.targets[i]
                             for i in which])
        # exponent alpha + 2 - n with n = 2
        np.add.at(Esq, owners, h[owners] ** spec.alpha * mismatch**2)
    return np.sqrt(Esq)


def indicator_control(mesh: Mesh, spec: ProblemSpec, u, p,
                      rule: QuadratureRule | None = None) -> np.ndarray:
    rule = rule or get_rule()
    pq = fem.p1_at_quadrature(p, mesh, rule)
    target = project_control(-pq / spec.lam, spec.a, spec.b)
    diff2 = (np.asarray(u)[:, None] - target) ** 2
    return np.sqrt(mesh.areas * (diff2 @ rule.weights))


@dataclass(frozen=True)
class IndicatorField:
    E_y: np.ndarray
    E_p: np.ndarray
    E_u: np.ndarray

    @property
    def combined_sq(self) -> np.ndarray:
        return self.E_y**2 + self.E_p**2 + self.E_u**2

    @property
    def combined(self) -> np.ndarray:
        return np.sqrt(self.combined_sq)

    @property
    def global_y(self) -> float:
        return float(np.max(self.E_y)) if len(self.E_y) else 0.0

    @property
    def global_p(self) -> float:
        return float(np.sqrt(np.sum(self.E_p**2)))

    @property
    def global_u(self) -> float:
        return float(np.sqrt(np.sum(self.E_u**2)))

    @property
    def global_ocp(self) -> float:
        return self.global_y + self.global_p + self.global_u


def combine(E_y, E_p, E_u) -> IndicatorField:
    E_y, E_p, E_u = (np.asarray(e, dtype=float) for e in (E_y, E_p, E_u))
    if not (E_y.shape == E_p.shape == E_u.shape):
        raise ValueError("indicators must live on the same mesh")
    return IndicatorField(E_y, E_p, E_u)


def compute_indicators(mesh: Mesh, spec: ProblemSpec, sol,
                       rule: QuadratureRule | None = None,
                       attribution: str = "closed") -> IndicatorField:
    rule = rule or get_rule()
    return combine(indicator_state(mesh, spec, sol.y, sol.u, rule),
                   indicator_adjoint(mesh, spec, sol.p, sol.y, attribution=attribution),
                   indicator_control(mesh, spec, sol.u, sol.p, rule))


def oscillation(mesh: Mesh, f, rule: QuadratureRule | None = None) -> float:
    """``max_T h_T^2 ||f - mean_T f||_inf`` with the sup taken over samples."""
    rule = rule or get_rule()
    vals = fem.evaluate(f, _sample_points(mesh, rule))
    mean = fem.p0_projection(mesh, f, rule)
    dev = np.abs(vals - mean[:, None]).max(axis=1)
    return float(np.max(mesh.diameters**2 * dev))


def log_factor(mesh: Mesh) -> float:
    return float(abs(np.log(1.0 / np.min(mesh.diameters))))
