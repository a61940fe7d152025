import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pointtrack.linalg import ConvergenceError, SparseSym, assemble_from_triplets, cg_solve


def _sym(a):
    return SparseSym(sp.csr_matrix(np.asarray(a, dtype=float)))


@pytest.mark.parametrize("A,b,x", [
    (np.eye(3), [1, 2, 3], [1, 2, 3]),
    (np.diag([2.0, 4.0]), [2, 8], [1, 2]),
    ([[4, 1], [1, 3]], [1, 2], [1 / 11, 7 / 11]),
])
def test_cg_small(A, b, x):
    assert np.allclose(cg_solve(_sym(A), b, tol_rel=1e-14), x, rtol=0, atol=1e-12)


def test_cg_zero_rhs():
    assert np.array_equal(cg_solve(_sym(np.eye(2)), [0.0, 0.0]), [0.0, 0.0])


def test_cg_random_spd_against_closed_form():
    rng = np.random.default_rng(1)
    for trial in range(1000):
        n = 2 + trial % 2
        G = rng.standard_normal((n, n))
        A = G @ G.T + 0.1 * np.eye(n)
        b = rng.standard_normal(n)
        # Cramer's rule as the oracle
        det = np.linalg.det(A)
        x_ref = np.array([np.linalg.det(np.column_stack([b if j == i else A[:, j]
                                                         for j in range(n)])) / det
                          for i in range(n)])
        x = cg_solve(_sym(A), b, tol_rel=1e-14)
        assert np.linalg.norm(x - x_ref) <= 1e-8 * np.linalg.norm(x_ref)


def test_cg_reports_nonconvergence():
    n = 60
    A = sp.diags([np.linspace(1, 1e6, n)], [0]) + sp.diags([np.ones(n - 1)] * 2, [-1, 1])
    with pytest.raises(ConvergenceError) as info:
        cg_solve(SparseSym(A), np.ones(n), tol_rel=1e-14, max_iter=2)
    assert info.value.residual > 0


def test_cg_warm_start_at_solution():
    A = _sym([[4, 1], [1, 3]])
    x = cg_solve(A, [1, 2], x0=[1 / 11, 7 / 11])
    assert np.allclose(x, [1 / 11, 7 / 11])


def test_triplets_sum_duplicates():
    A = assemble_from_triplets(2, [(0, 0, 1.0), (0, 0, 1.0)])
    assert A[0, 0] == 2.0


def test_triplets_with_mirror_are_symmetric():
    A = assemble_from_triplets(2, [(0, 1, 3.0), (1, 0, 3.0)])
    assert np.array_equal(A.toarray(), A.toarray().T)


def test_triplets_out_of_range():
    with pytest.raises(IndexError):
        assemble_from_triplets(3, [(2, 3, 1.0)])


def test_asymmetric_rejected():
    with pytest.raises(ValueError):
        _sym([[1, 2], [0, 1]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 50), st.floats(0.05, 0.5), st.integers(0, 2**31 - 1))
def test_matvec_matches_dense(n, density, seed):
    rng = np.random.default_rng(seed)
    R = sp.random(n, n, density=density, random_state=rng, format="csr")
    A = SparseSym(R + R.T)
    x = rng.standard_normal(n)
    dense = (R + R.T).toarray()
    assert np.allclose(A @ x, dense @ x, rtol=0, atol=1e-12 * max(1.0, np.abs(dense).sum()))
    assert np.array_equal(A.diagonal(), np.diag(dense))


def test_submatrix():
    A = _sym([[2, -1, 0], [-1, 2, -1], [0, -1, 2]])
    assert np.array_equal(A.submatrix([0, 2]).toarray(), [[2, 0], [0, 2]])
