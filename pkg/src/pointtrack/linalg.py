"""Symmetric sparse matrices and a Jacobi-preconditioned CG solver."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-10


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SparseSym:
    """Structurally symmetric matrix in compressed row storage.

    Thin wrapper around a ``scipy.sparse.csr_matrix``; it only adds the
    symmetry contract and the few operations the solvers need.
    """

    def __init__(self, csr: sp.csr_matrix, check: bool = True, rtol: float = 1e-12):
        csr = sp.csr_matrix(csr, dtype=float)
        csr.sum_duplicates()
        csr.sort_indices()
        if csr.shape[0] != csr.shape[1]:
            raise ValueError(f"matrix must be square, got {csr.shape}")
        if check and csr.nnz:
            asym = abs(csr - csr.T)
            scale = abs(csr).max()
            if asym.nnz and asym.max() > rtol * scale:
                raise ValueError("matrix is not symmetric")
        self.csr = csr

    @property
    def dimension(self) -> int:
        return self.csr.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.csr.indices

    @property
    def values(self) -> np.ndarray:
        return self.csr.data

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def __matmul__(self, x):
        return self.csr @ x

    def __getitem__(self, ij):
        return self.csr[ij]

    def submatrix(self, idx) -> "SparseSym":
        idx = np.asarray(idx)
        return SparseSym(self.csr[idx][:, idx], check=False)

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()


def assemble_from_triplets(dimension: int, rows, cols=None, values=None) -> SparseSym:
    """Sum (row, col, value) contributions into a symmetric matrix.

    Accepts either a list of triplets or three parallel arrays.  The caller
    supplies both (i, j) and (j, i) for off-diagonal entries.
    """
    if cols is None:
        trip = list(rows)
        if trip:
            rows, cols, values = (np.array(c) for c in zip(*trip))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            values = np.zeros(0)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if rows.size and (min(rows.min(), cols.min()) < 0
                      or max(rows.max(), cols.max()) >= dimension):
        raise IndexError(f"triplet index out of range for dimension {dimension}")
    coo = sp.coo_matrix((values, (rows, cols)), shape=(dimension, dimension))
    return SparseSym(coo.tocsr())


def cg_solve(A, b, tol_rel: float = DEFAULT_TOL, max_iter: int | None = None,
             x0=None) -> np.ndarray:
    """Preconditioned conjugate gradients with a Jacobi (diagonal) preconditioner.

    Stops once ``||A x - b|| <= tol_rel * ||b||``.  Raises
    :class:`ConvergenceError` if that does not happen in ``max_iter``
    iterations (default ``20 * dimension``).
    """
    if not 0.0 < tol_rel < 1.0:
        raise ValueError("tol_rel must lie in (0, 1)")
    M = A.csr if isinstance(A, SparseSym) else sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 20 * max(n, 1)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    target = tol_rel * bnorm
    inv_diag = 1.0 / M.diagonal()

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - M @ x if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = M @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            # guard against drift of the recursive residual
            true_r = np.linalg.norm(b - M @ x)
            if true_r <= target:
                return x
            r = b - M @ x
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations "
        f"(relative residual {rnorm / bnorm:.3e})",
        residual=rnorm / bnorm, iterations=max_iter)
