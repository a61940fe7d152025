"""Quadrature rules on triangles in barycentric form.

Weights are normalised to sum to one, so ``area * sum(w * f(x_q))``
integrates over a physical element.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)

    def physical_points(self, corners: np.ndarray) -> np.ndarray:
        """Map to elements with vertex arrays of shape (ne, 3, 2) -> (ne, nq, 2)."""
        return np.einsum("qk,ekd->eqd", self.points, corners)

    def exactness_error(self) -> float:
        """Largest error over monomials x^i y^j with i + j <= degree."""
        x, y = self.points[:, 1], self.points[:, 2]
        worst = 0.0
        for i in range(self.degree + 1):
            for j in range(self.degree + 1 - i):
                exact = 2.0 * factorial(i) * factorial(j) / factorial(i + j + 2)
                worst = max(worst, abs(self.weights @ (x**i * y**j) - exact))
        return worst


def _orbit(w, *coords):
    pts = sorted(set(itertools.permutations(coords)))
    return [(p, w) for p in pts]


@lru_cache(maxsize=None)
def symmetric_rule() -> QuadratureRule:
    """Fully symmetric 16-point rule, exact for degree 8, positive weights."""
    a1, a2, a3 = 0.459292588292723, 0.170569307751760, 0.050547228317031
    b1, b2 = 0.008394777409958, 0.263112829634638
    nodes = (
        _orbit(0.144315607677787, 1 / 3, 1 / 3, 1 / 3)
        + _orbit(0.095091634267285, a1, a1, 1 - 2 * a1)
        + _orbit(0.103217370534718, a2, a2, 1 - 2 * a2)
        + _orbit(0.032458497623198, a3, a3, 1 - 2 * a3)
        + _orbit(0.027230314174435, b1, b2, 1 - b1 - b2)
    )
    pts = np.array([p for p, _ in nodes])
    w = np.array([w for _, w in nodes])
    return QuadratureRule(pts, w / w.sum(), 8)


@lru_cache(maxsize=None)
def collapsed_gauss_rule(degree: int) -> QuadratureRule:
    """Conical product (Gauss-Jacobi x Gauss-Legendre) rule of given degree.

    All nodes are interior and all weights positive; used for the
    high-degree option and for singular integrands.
    """
    n = degree // 2 + 1
    s, ws = roots_jacobi(n, 1.0, 0.0)  # weight (1 - s) on [-1, 1]
    t, wt = roots_legendre(n)
    s = 0.5 * (s + 1.0)
    t = 0.5 * (t + 1.0)
    ws = ws / 4.0
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    x = S.ravel()
    y = ((1.0 - S) * T).ravel()
    w = np.outer(ws, wt).ravel()
    pts = np.stack([1.0 - x - y, x, y], axis=1)
    return QuadratureRule(pts, w / w.sum(), degree)


def get_rule(degree: int = 8) -> QuadratureRule:
    if degree <= 8:
        return symmetric_rule()
    return collapsed_gauss_rule(degree)


DEFAULT_RULE_DEGREE = 8
