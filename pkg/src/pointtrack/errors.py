"""Benchmark problems, manufactured solutions and error norms.

Examples 2-4 are manufactured: the optimal adjoint is the sum of
fundamental solutions ``-1/(2 pi) sum_z log|x - z|``, which solves the
adjoint equation with unit Dirac coefficients.  Hence the targets satisfy
``y_z = ybar(z) - 1``, the control is ``ubar = Pi(-pbar / lam)`` and the
forcing is ``f = -Lap(ybar) - ubar``.  Boundary data are the traces of
``ybar`` and ``pbar``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import fem
from .estimator import IndicatorField, WeightRho, eval_rho
from .mesh import Domain, Mesh
from .ocp import ProblemSpec, project_control
from .quadrature import QuadratureRule, collapsed_gauss_rule, get_rule

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExactSolution:
    y: Func
    grad_y: Func
    lap_y: Func
    p: Func
    grad_p: Func
    u: Func
    f: Func


def fundamental_adjoint(Z):
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)

    def p(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x[..., None, :] - Z, axis=-1)
        # +inf at an observation point; the projected control clamps it
        with np.errstate(divide="ignore"):
            return -np.sum(np.log(r), axis=-1) / (2.0 * np.pi)

    def grad_p(x):
        x = np.asarray(x, dtype=float)
        d = x[..., None, :] - Z
        r2 = np.sum(d**2, axis=-1, keepdims=True)
        return -np.sum(d / r2, axis=-2) / (2.0 * np.pi)

    return p, grad_p


def _manufactured(domain, Z, a, b, lam, alpha, y, grad_y, lap_y, name, targets=None):
    p, grad_p = fundamental_adjoint(Z)

    def u(x):
        return project_control(-p(x) / lam, a, b)

    def f(x):
        return -lap_y(x) - u(x)

    exact = ExactSolution(y=y, grad_y=grad_y, lap_y=lap_y, p=p, grad_p=grad_p, u=u, f=f)
    Z = np.asarray(Z, dtype=float)
    if targets is None:
        targets = y(Z) - 1.0
    return ProblemSpec(domain=domain, Z=Z, targets=targets, a=a, b=b, lam=lam,
                       alpha=alpha, f=f, g_state=y, g_adjoint=p, exact=exact, name=name)


def _ex1_forcing(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2) * x1**3


def _ex2_y(x):
    x1, x2 = x[..., 0], x[..., 1]
    return 32.0 * x1 * x2 * (1 - x1) * (1 - x2)


def _ex2_grad(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([32.0 * (1 - 2 * x1) * x2 * (1 - x2),
                     32.0 * (1 - 2 * x2) * x1 * (1 - x1)], axis=-1)


def _ex2_lap(x):
    x1, x2 = x[..., 0], x[..., 1]
    return -64.0 * (x1 * (1 - x1) + x2 * (1 - x2))


def _ex3_y(x):
    x1, x2 = x[..., 0], x[..., 1]
    return 2.75 - 2 * x1 - 2 * x2 + 4 * x1 * x2


def _ex3_grad(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([-2 + 4 * x2, -2 + 4 * x1], axis=-1)


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


def lshape_angle(x):
    """Polar angle in [0, 3 pi / 2], counterclockwise from the positive x1-axis."""
    th = np.arctan2(x[..., 1], x[..., 0])
    return np.where(th < 0, th + 2 * np.pi, th)


def _ex4_y(x):
    r = np.hypot(x[..., 0], x[..., 1])
    return r ** (2.0 / 3.0) * np.sin(2.0 * lshape_angle(x) / 3.0)


def _ex4_grad(x):
    r = np.hypot(x[..., 0], x[..., 1])
    th = lshape_angle(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (2.0 / 3.0) * r ** (-1.0 / 3.0)
        gr = c * np.sin(2 * th / 3)
        gt = c * np.cos(2 * th / 3)
        gx = gr * np.cos(th) - gt * np.sin(th)
        gy = gr * np.sin(th) + gt * np.cos(th)
    return np.stack([gx, gy], axis=-1)


def make_example(n: int, alpha: float = 1.5) -> ProblemSpec:
    """The four planar benchmark problems (lam = 1)."""
    if n == 1:
        return ProblemSpec(domain=Domain.UNIT_SQUARE, Z=[(0.75, 0.75), (0.25, 0.25)],
                           targets=[1.0, -1.0], a=-0.5, b=0.5, lam=1.0, alpha=alpha,
                           f=_ex1_forcing, name="example1")
    if n == 2:
        return _manufactured(Domain.UNIT_SQUARE, [(0.5, 0.5)], -0.4, -0.2, 1.0, alpha,
                             _ex2_y, _ex2_grad, _ex2_lap, "example2")
    if n == 3:
        Z = [(0.75, 0.75), (0.75, 0.25), (0.25, 0.75), (0.25, 0.25)]
        return _manufactured(Domain.UNIT_SQUARE, Z, -1.2, -0.7, 1.0, alpha,
                             _ex3_y, _ex3_grad, _zero, "example3",
                             targets=[1.0, 0.5, 0.5, 1.0])
    if n == 4:
        return _manufactured(Domain.LSHAPE, [(0.5, 0.5)], -0.4, -0.2, 1.0, alpha,
                             _ex4_y, _ex4_grad, _zero, "example4")
    raise ValueError(f"unknown example {n}; choose 1-4")


# -- error norms -------------------------------------------------------------------

def _sample_points(mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    corners = mesh.vertices[mesh.elements]
    mids = 0.5 * (corners + np.roll(corners, -1, axis=1))
    return np.concatenate([fem.quadrature_points(mesh, rule), corners, mids], axis=1)


def _sample_bary(rule: QuadratureRule) -> np.ndarray:
    eye = np.eye(3)
    mids = 0.5 * (eye + np.roll(eye, -1, axis=0))
    return np.concatenate([rule.points, eye, mids], axis=0)


def norm_linf_error(mesh: Mesh, y, ybar, rule: QuadratureRule | None = None) -> float:
    """Sampled max-norm error over vertices, side midpoints and quadrature nodes."""
    rule = rule or get_rule()
    lam = _sample_bary(rule)
    yh = np.asarray(y)[mesh.elements] @ lam.T
    pts = np.einsum("qk,ekd->eqd", lam, mesh.vertices[mesh.elements])
    return float(np.max(np.abs(yh - fem.evaluate(ybar, pts))))


@lru_cache(maxsize=None)
def subdivided_rule(depth: int, degree: int = 8) -> QuadratureRule:
    """Composite rule on ``4**depth`` uniform sub-triangles of the reference element."""
    base = collapsed_gauss_rule(degree)
    tris = [np.eye(3)]
    for _ in range(depth):
        nxt = []
        for t in tris:
            m01, m12, m20 = (t[0] + t[1]) / 2, (t[1] + t[2]) / 2, (t[2] + t[0]) / 2
            nxt += [np.array([t[0], m01, m20]), np.array([m01, t[1], m12]),
                    np.array([m20, m12, t[2]]), np.array([m12, m20, m01])]
        tris = nxt
    pts = np.concatenate([base.points @ t for t in tris])
    w = np.tile(base.weights, len(tris)) / len(tris)
    return QuadratureRule(pts, w, degree)


def norm_weighted_h1_error(mesh: Mesh, p, grad_pbar, weight: WeightRho,
                           rule: QuadratureRule | None = None, depth: int = 4) -> float:
    """``sqrt(sum_T int_T rho |grad p_h - grad pbar|^2)``.

    Elements whose closure contains an observation point carry an
    integrable singularity and are integrated on a ``depth``-fold uniform
    sub-triangulation.
    """
    rule = rule or get_rule()
    grad_h = fem.p1_gradients(p, mesh)
    corners = mesh.vertices[mesh.elements]
    singular = np.zeros(mesh.n_elements, dtype=bool)
    for z in weight.Z:
        singular[mesh.containing_elements(z)] = True

    def integrate(idx, r):
        pts = r.physical_points(corners[idx])
        diff = grad_h[idx, None, :] - grad_pbar(pts)
        vals = eval_rho(weight, pts) * np.sum(diff**2, axis=-1)
        return np.sum(mesh.areas[idx] * (vals @ r.weights))

    total = integrate(np.flatnonzero(~singular), rule)
    if np.any(singular):
        total += integrate(np.flatnonzero(singular), subdivided_rule(depth))
    return float(np.sqrt(total))


def norm_l2_control_error(mesh: Mesh, u, ubar, rule: QuadratureRule | None = None) -> float:
    rule = rule or get_rule()
    diff = np.asarray(u)[:, None] - fem.evaluate(ubar, fem.quadrature_points(mesh, rule))
    return float(np.sqrt(np.sum(mesh.areas * (diff**2 @ rule.weights))))


@dataclass(frozen=True)
class ErrorReport:
    err_y: float
    err_p: float
    err_u: float

    @property
    def err_total(self) -> float:
        return float(np.sqrt(self.err_y**2 + self.err_p**2 + self.err_u**2))


class ZeroErrorError(ZeroDivisionError):
    pass


def error_report(mesh: Mesh, spec: ProblemSpec, sol, rule: QuadratureRule | None = None,
                 depth: int = 4) -> ErrorReport:
    ex = spec.exact
    if ex is None:
        raise ValueError(f"problem {spec.name!r} has no exact solution")
    weight = WeightRho.for_points(spec.Z, spec.alpha, spec.domain)
    return ErrorReport(
        err_y=norm_linf_error(mesh, sol.y, ex.y, rule),
        err_p=norm_weighted_h1_error(mesh, sol.p, ex.grad_p, weight, rule, depth),
        err_u=norm_l2_control_error(mesh, sol.u, ex.u, rule),
    )


def effectivity(report: ErrorReport, indicators: IndicatorField | float) -> float:
    est = indicators.global_ocp if isinstance(indicators, IndicatorField) else float(indicators)
    if report.err_total <= 0.0:
        raise ZeroErrorError("effectivity undefined for zero error")
    return est / report.err_total
