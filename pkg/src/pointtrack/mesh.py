"""Conforming triangular meshes with longest-edge bisection.

A :class:`Mesh` is an immutable pair of arrays (vertex coordinates and
counterclockwise element connectivity).  Everything else -- sides, boundary
flags, patches, element geometry -- is derived lazily and cached.

Refinement never mutates a mesh; :func:`refine` returns a new one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

# relative tolerance for deciding that two edge lengths tie
_TIE_RTOL = 1e-12
# barycentric tolerance for point location
_BARY_TOL = 1e-12


class Domain(enum.Enum):
    UNIT_SQUARE = "unit_square"
    LSHAPE = "lshape"

    @property
    def polygon(self) -> np.ndarray:
        """Boundary vertices in counterclockwise order."""
        if self is Domain.UNIT_SQUARE:
            return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        return np.array(
            [[-1.0, -1.0], [0.0, -1.0], [0.0, 0.0], [1.0, 0.0],
             [1.0, 1.0], [-1.0, 1.0]]
        )

    @property
    def area(self) -> float:
        return 1.0 if self is Domain.UNIT_SQUARE else 3.0

    def boundary_distance(self, x) -> np.ndarray:
        """Euclidean distance from each point to the boundary polygon."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        poly = self.polygon
        a = poly
        b = np.roll(poly, -1, axis=0)
        d = b - a
        # project every point on every segment
        t = np.einsum("pk,sk->ps", x, d) - np.einsum("sk,sk->s", a, d)
        t = np.clip(t / np.einsum("sk,sk->s", d, d), 0.0, 1.0)
        proj = a[None, :, :] + t[:, :, None] * d[None, :, :]
        return np.min(np.linalg.norm(x[:, None, :] - proj, axis=2), axis=1)

    def contains(self, x, strict: bool = True) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = (0.0, 1.0) if self is Domain.UNIT_SQUARE else (-1.0, 1.0)
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        if self is Domain.LSHAPE:
            inside &= ~((x[:, 0] > 0.0) & (x[:, 1] < 0.0))
        if strict:
            inside &= self.boundary_distance(x) > 0.0
        return inside


class PointLocationError(ValueError):
    """Raised when a query point lies outside the mesh."""


class PrerefinementError(RuntimeError):
    """Raised when observation points cannot be separated by refinement."""


@dataclass(frozen=True)
class Geometry:
    """Per-element geometric quantities, stored as arrays.

    ``D`` is the distance measure used by the adjoint indicator,
    ``min_z max_{x in T} |x - z|``; it is ``inf`` when no observation
    points were supplied (``has_points`` is then False).
    """

    h: np.ndarray
    area: np.ndarray
    D: np.ndarray
    barycenter: np.ndarray
    has_points: bool = True


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    elements: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        e = np.ascontiguousarray(self.elements, dtype=np.int64)
        v.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "elements", e)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    # -- sides ---------------------------------------------------------------
    @cached_property
    def _edge_data(self):
        e = self.elements
        # local edge k is opposite local vertex k
        loc = np.stack([e[:, [1, 2]], e[:, [2, 0]], e[:, [0, 1]]], axis=1)
        keys = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        element_edges = inverse.reshape(-1, 3)
        owner = np.repeat(np.arange(self.n_elements), 3)
        edge_elements = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        edge_elements[sorted_edges[first], 0] = owner[order[first]]
        edge_elements[sorted_edges[~first], 1] = owner[order[~first]]
        return edges, element_edges, edge_elements

    @property
    def edges(self) -> np.ndarray:
        """Unique sides as sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def element_edges(self) -> np.ndarray:
        """Side id of local edge k (opposite local vertex k) per element."""
        return self._edge_data[1]

    @property
    def edge_elements(self) -> np.ndarray:
        """Left and right element of each side; right is -1 on the boundary."""
        return self._edge_data[2]

    @property
    def sides(self):
        return list(zip(map(tuple, self.edges), self.edge_elements[:, 0],
                        (None if r < 0 else r for r in self.edge_elements[:, 1])))

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_elements[:, 1] < 0

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.edges[self.boundary_edges].ravel()] = True
        return flags

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices[self.edges]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    # -- element geometry ----------------------------------------------------
    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def local_edge_lengths(self) -> np.ndarray:
        """Length of local edge k (opposite vertex k), shape (ne, 3)."""
        p = self.vertices[self.elements]
        return np.stack(
            [np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
             np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
             np.linalg.norm(p[:, 1] - p[:, 0], axis=1)], axis=1)

    @property
    def diameters(self) -> np.ndarray:
        return self.local_edge_lengths.max(axis=1)

    @cached_property
    def refinement_edge(self) -> np.ndarray:
        """Local index of the longest edge; ties go to the smallest opposite vertex."""
        lengths = self.local_edge_lengths
        longest = lengths.max(axis=1, keepdims=True)
        tied = lengths >= longest * (1.0 - _TIE_RTOL)
        opposite = np.where(tied, self.elements, np.iinfo(np.int64).max)
        return np.argmin(opposite, axis=1)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the three barycentric coordinates, shape (ne, 3, 2)."""
        p = self.vertices[self.elements]
        # gradient of lambda_k is the rotated opposite edge over twice the area
        e0 = p[:, 2] - p[:, 1]
        e1 = p[:, 0] - p[:, 2]
        e2 = p[:, 1] - p[:, 0]
        rot = np.stack([np.stack([-e[:, 1], e[:, 0]], axis=1) for e in (e0, e1, e2)],
                       axis=1)
        return rot / (2.0 * self.signed_areas[:, None, None])

    def min_angles(self) -> np.ndarray:
        p = self.vertices[self.elements]
        angles = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            w = p[:, (k + 2) % 3] - p[:, k]
            c = np.einsum("ij,ij->i", u, w) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return np.min(angles, axis=0)

    # -- connectivity --------------------------------------------------------
    @cached_property
    def vertex_element_incidence(self) -> sp.csr_matrix:
        ne = self.n_elements
        rows = np.repeat(np.arange(ne), 3)
        return sp.csr_matrix(
            (np.ones(3 * ne, dtype=np.int8), (rows, self.elements.ravel())),
            shape=(ne, self.n_vertices))

    @cached_property
    def patch_matrix(self) -> sp.csr_matrix:
        """Boolean element-element matrix: True when two elements share a vertex."""
        inc = self.vertex_element_incidence.astype(np.int32)
        return ((inc @ inc.T) > 0).tocsr()

    def patch(self, element: int) -> np.ndarray:
        row = self.patch_matrix
        return row.indices[row.indptr[element]:row.indptr[element + 1]].copy()

    # -- point location ------------------------------------------------------
    def barycentric(self, x) -> np.ndarray:
        """Barycentric coordinates of one point w.r.t. every element, (ne, 3)."""
        x = np.asarray(x, dtype=float)
        p = self.vertices[self.elements]
        grads = self.barycentric_gradients
        lam = np.einsum("ekd,ed->ek", grads, x[None, :] - p[:, 0, :])
        lam[:, 0] = 1.0 - lam[:, 1] - lam[:, 2]
        return lam

    def containing_elements(self, x) -> np.ndarray:
        """All elements whose closure contains ``x`` (sorted ids)."""
        lam = self.barycentric(x)
        return np.flatnonzero(lam.min(axis=1) >= -_BARY_TOL)

    def locate(self, x) -> tuple[int, np.ndarray]:
        """Lowest-id element containing ``x`` and the barycentric coordinates."""
        lam = self.barycentric(x)
        hits = np.flatnonzero(lam.min(axis=1) >= -_BARY_TOL)
        if len(hits) == 0:
            raise PointLocationError(f"point {tuple(np.asarray(x))} is outside the mesh")
        t = int(hits[0])
        return t, lam[t]

    # -- checks --------------------------------------------------------------
    def is_conforming(self) -> bool:
        """Every side is shared by at most two elements and no vertex hangs on a side."""
        counts = np.bincount(self.element_edges.ravel(), minlength=len(self.edges))
        if np.any(counts > 2):
            return False
        # a hanging node is an endpoint of a one-sided side lying inside another
        cand = self.edges[self.boundary_edges]
        if len(cand) == 0:
            return True
        pts = self.vertices[np.unique(cand)]
        a = self.vertices[cand[:, 0]]
        d = self.vertices[cand[:, 1]] - a
        dd = np.einsum("ij,ij->i", d, d)
        rel = pts[None, :, :] - a[:, None, :]
        t = np.einsum("spk,sk->sp", rel, d) / dd[:, None]
        cross = d[:, None, 0] * rel[:, :, 1] - d[:, None, 1] * rel[:, :, 0]
        hanging = (t > 1e-9) & (t < 1 - 1e-9) & (np.abs(cross) <= 1e-10 * dd[:, None])
        return not bool(np.any(hanging))


# -- construction --------------------------------------------------------------

def _criss_cross(cells, s: int) -> Mesh:
    """Criss-cross triangulation of unit-spaced cells refined ``s`` times per axis.

    ``cells`` are the integer lower-left corners of unit squares.  Vertices
    are deduplicated on the integer lattice of spacing ``1/(2s)``.
    """
    index: dict[tuple[int, int], int] = {}
    coords = []

    def vid(i, j):
        key = (i, j)
        if key not in index:
            index[key] = len(coords)
            coords.append((i / (2 * s), j / (2 * s)))
        return index[key]

    elements = []
    for cx, cy in cells:
        for a in range(s):
            for b in range(s):
                i0 = 2 * (cx * s + a)
                j0 = 2 * (cy * s + b)
                v00, v10 = vid(i0, j0), vid(i0 + 2, j0)
                v11, v01 = vid(i0 + 2, j0 + 2), vid(i0, j0 + 2)
                c = vid(i0 + 1, j0 + 1)
                elements += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
    return Mesh(np.array(coords), np.array(elements))


def build_initial_mesh(domain: Domain | str, subdivisions: int) -> Mesh:
    """Criss-cross grid on the unit square or the L-shape.

    Every grid cell is split into four triangles through its center.  The
    L-shape ``(-1,1)^2 minus [0,1)x(-1,0]`` is tiled by three unit cells.
    """
    domain = Domain(domain)
    if subdivisions < 1:
        raise ValueError("subdivisions must be >= 1")
    if domain is Domain.UNIT_SQUARE:
        return _criss_cross([(0, 0)], subdivisions)
    return _criss_cross([(-1, -1), (-1, 0), (0, 0)], subdivisions)


def two_triangle_square() -> Mesh:
    """Unit square split along the diagonal (0,0)-(1,1)."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


# -- observation points ----------------------------------------------------------

def compute_geometry(mesh: Mesh, Z) -> Geometry:
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    if len(Z) == 0:
        D = np.full(mesh.n_elements, np.inf)
        has = False
    else:
        p = mesh.vertices[mesh.elements]
        # max over a simplex of |x - z| is attained at a vertex
        dist = np.linalg.norm(p[:, :, None, :] - Z[None, None, :, :], axis=3)
        D = dist.max(axis=1).min(axis=1)
        has = True
    return Geometry(h=mesh.diameters, area=mesh.areas, D=D,
                    barycenter=mesh.barycenters, has_points=has)


def observation_incidence(mesh: Mesh, Z) -> sp.csr_matrix:
    """(nZ, ne) boolean matrix: element closure contains z."""
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    rows, cols = [], []
    for i, z in enumerate(Z):
        hits = mesh.containing_elements(z)
        if len(hits) == 0:
            raise PointLocationError(f"observation point {tuple(z)} is outside the mesh")
        rows += [i] * len(hits)
        cols += list(hits)
    return sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                         shape=(len(Z), mesh.n_elements))


def patch_counts(mesh: Mesh, Z) -> np.ndarray:
    """Number of observation points in the patch of each element.

    A point on a shared side or vertex counts for every incident element.
    """
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    if len(Z) == 0:
        return np.zeros(mesh.n_elements, dtype=np.int64)
    inc = observation_incidence(mesh, Z).astype(np.int32)
    seen = (inc @ mesh.patch_matrix.astype(np.int32)) > 0
    return np.asarray(seen.sum(axis=0)).ravel()


def check_patch_assumption(mesh: Mesh, Z) -> bool:
    return bool(np.all(patch_counts(mesh, Z) <= 1))


def prerefine_for_observations(mesh: Mesh, Z, max_rounds: int = 30) -> Mesh:
    """Refine around crowded patches until each patch holds at most one point."""
    for _ in range(max_rounds):
        bad = np.flatnonzero(patch_counts(mesh, Z) > 1)
        if len(bad) == 0:
            return mesh
        mesh = refine(mesh, bad)
    if check_patch_assumption(mesh, Z):
        return mesh
    raise PrerefinementError(
        f"patch condition still violated after {max_rounds} rounds; "
        "observation points coincide or touch the boundary")


# -- refinement ----------------------------------------------------------------

@dataclass(frozen=True)
class Transfer:
    """Bookkeeping from a refinement step.

    ``parent[t]`` is the coarse element containing fine element ``t``;
    ``vertex_parents[v]`` holds the two coarse vertices whose midpoint is
    ``v`` (or ``v`` twice for vertices inherited from the coarse mesh).
    """

    parent: np.ndarray
    vertex_parents: np.ndarray = field(repr=False)

    def prolong_p1(self, values: np.ndarray) -> np.ndarray:
        return 0.5 * (values[self.vertex_parents[:, 0]] + values[self.vertex_parents[:, 1]])

    def prolong_p0(self, values: np.ndarray) -> np.ndarray:
        return values[self.parent]


def refine(mesh: Mesh, marked) -> Mesh:
    """Longest-edge bisection of the marked elements plus conforming closure."""
    return refine_with_transfer(mesh, marked)[0]


def refine_with_transfer(mesh: Mesh, marked) -> tuple[Mesh, Transfer]:
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray)
                                  else marked, dtype=np.int64))
    if len(marked) and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise IndexError("marked element id out of range")

    coords = [tuple(c) for c in mesh.vertices.tolist()]
    vparents = [(i, i) for i in range(len(coords))]
    elems = [tuple(t) for t in mesh.elements.tolist()]
    root = list(range(len(elems)))
    alive = [True] * len(elems)
    edge_elems: dict[tuple[int, int], set[int]] = {}
    for t, (a, b, c) in enumerate(elems):
        for e in ((b, c), (c, a), (a, b)):
            edge_elems.setdefault((min(e), max(e)), set()).add(t)
    midpoint: dict[tuple[int, int], int] = {}

    def longest_local(t):
        v = elems[t]
        best, best_len, best_opp = 0, -1.0, None
        for k in range(3):
            (x1, y1), (x2, y2) = coords[v[(k + 1) % 3]], coords[v[(k + 2) % 3]]
            L = (x2 - x1) ** 2 + (y2 - y1) ** 2
            if best_opp is None or L > best_len * (1 + 2 * _TIE_RTOL):
                best, best_len, best_opp = k, L, v[k]
            elif L >= best_len * (1 - 2 * _TIE_RTOL) and v[k] < best_opp:
                best, best_len, best_opp = k, max(L, best_len), v[k]
        return best

    def add(t_new):
        a, b, c = elems[t_new]
        for e in ((b, c), (c, a), (a, b)):
            edge_elems.setdefault((min(e), max(e)), set()).add(t_new)

    stack = list(marked[::-1])
    while stack:
        t = stack.pop()
        if not alive[t]:
            continue
        k = longest_local(t)
        v = elems[t]
        c, a, b = v[k], v[(k + 1) % 3], v[(k + 2) % 3]
        key = (min(a, b), max(a, b))
        m = midpoint.get(key)
        if m is None:
            (xa, ya), (xb, yb) = coords[a], coords[b]
            m = len(coords)
            coords.append((0.5 * (xa + xb), 0.5 * (ya + yb)))
            vparents.append((a, b))
            midpoint[key] = m
        alive[t] = False
        for e in ((v[1], v[2]), (v[2], v[0]), (v[0], v[1])):
            edge_elems[(min(e), max(e))].discard(t)
        children = [(c, a, m), (c, m, b)]
        for ch in children:
            elems.append(ch)
            root.append(root[t])
            alive.append(True)
            add(len(elems) - 1)
        # the neighbour across the bisected side now has a hanging node
        stack.extend(edge_elems[key])
        for j in (len(elems) - 2, len(elems) - 1):
            x, y, w = elems[j]
            for e in ((y, w), (w, x), (x, y)):
                if (min(e), max(e)) in midpoint:
                    stack.append(j)
                    break

    keep = [t for t in range(len(elems)) if alive[t]]
    new = Mesh(np.array(coords), np.array([elems[t] for t in keep]))
    transfer = Transfer(parent=np.array([root[t] for t in keep], dtype=np.int64),
                        vertex_parents=np.array(vparents, dtype=np.int64))
    return new, transfer


def uniform_refine(mesh: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        mesh = refine(mesh, np.arange(mesh.n_elements))
    return mesh


def element_distance(mesh: Mesh, x) -> np.ndarray:
    """Distance from a point to each (closed) element."""
    x = np.asarray(x, dtype=float)
    p = mesh.vertices[mesh.elements]
    best = np.full(mesh.n_elements, np.inf)
    for k in range(3):
        a, b = p[:, k], p[:, (k + 1) % 3]
        d = b - a
        t = np.clip(np.einsum("ij,ij->i", x - a, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(a + t[:, None] * d - x, axis=1))
    inside = mesh.barycentric(x).min(axis=1) >= -_BARY_TOL
    best[inside] = 0.0
    return best
