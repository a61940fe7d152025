import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, strategies as st

from pointtrack import fem
from pointtrack.errors import make_example
from pointtrack.mesh import build_initial_mesh, prerefine_for_observations, refine_with_transfer
from pointtrack.ocp import (DiscreteSolution, Discretization, PdasConfig, PdasError, ProblemSpec,
                            compute_cost, pdas_solve, project_control, solve_adjoint,
                            solve_state, vi_residual)

CENTER = [(0.5, 0.5)]


def _prepared(n, s=2):
    spec = make_example(n)
    mesh = build_initial_mesh(spec.domain, s)
    return spec, prerefine_for_observations(mesh, spec.Z)


@pytest.mark.parametrize("v,a,b,out", [(0.0, -0.5, 0.5, 0.0), (0.7, -0.5, 0.5, 0.5),
                                       (-1.3, -1.2, -0.7, -1.2)])
def test_projection_examples(v, a, b, out):
    assert project_control(v, a, b) == out


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-10, 10), st.floats(0, 10))
def test_projection_idempotent_and_monotone(v, w, a, width):
    b = a + width
    pv = project_control(v, a, b)
    assert project_control(pv, a, b) == pv
    if v <= w:
        assert pv <= project_control(w, a, b)


def test_projection_rejects_inverted_box():
    with pytest.raises(ValueError):
        project_control(0.0, 1.0, 0.0)


@pytest.mark.parametrize("kw,msg", [
    (dict(a=1.0, b=0.0), "a < b"),
    (dict(lam=0.0), "lam"),
    (dict(alpha=2.0), r"\(0, 2\)"),
    (dict(alpha=0.0), r"\(0, 2\)"),
    (dict(Z=[(1.0, 0.5)]), "strictly inside"),
    (dict(Z=[(0.3, 0.3), (0.3, 0.3)], targets=[0, 0]), "distinct"),
    (dict(Z=[(0.5, -0.5)], domain="lshape"), "strictly inside"),
])
def test_problem_validation(kw, msg):
    base = dict(domain="unit_square", Z=CENTER, targets=[0.0], a=-1.0, b=1.0)
    base.update(kw)
    with pytest.raises(ValueError, match=msg):
        ProblemSpec(**base)


def test_state_center_value():
    spec = ProblemSpec("unit_square", CENTER, [0.0], -1, 1, f=1.0)
    m = build_initial_mesh("unit_square", 1)
    y = solve_state(spec, m, np.zeros(m.n_elements))
    assert fem.eval_p1(y, m, (0.5, 0.5)) == pytest.approx(1 / 12, abs=1e-13)
    spec0 = ProblemSpec("unit_square", CENTER, [0.0], -1, 1)
    assert not np.any(solve_state(spec0, m, np.zeros(m.n_elements)))


def test_adjoint_center_value():
    # y = 0 with target -1 gives a unit Dirac coefficient
    spec = ProblemSpec("unit_square", CENTER, [-1.0], -1, 1)
    m = build_initial_mesh("unit_square", 1)
    p = solve_adjoint(spec, m, np.zeros(m.n_vertices))
    assert fem.eval_p1(p, m, (0.5, 0.5)) == pytest.approx(0.25, abs=1e-13)


def test_adjoint_vanishes_on_matched_targets():
    spec = ProblemSpec("unit_square", [(0.5, 0.5), (0.25, 0.25)], [0.0, 0.0], -1, 1)
    m = build_initial_mesh("unit_square", 4)
    y = fem.interpolate(m, lambda x: (x[..., 0] - 0.5) * (x[..., 1] - 0.25))
    assert not np.any(solve_adjoint(spec, m, y))


def _kkt_oracle(spec, mesh):
    """Unconstrained optimality system solved as one sparse block system."""
    nv, ne = mesh.n_vertices, mesh.n_elements
    K = fem.assemble_stiffness(mesh).csr
    B = fem.control_coupling(mesh)
    P = fem.point_evaluation_matrix(mesh, spec.Z)
    bd = mesh.boundary_vertices
    keep = sp.diags((~bd).astype(float))
    fix = sp.diags(bd.astype(float))
    Ky = keep @ K + fix
    Z0 = sp.csr_matrix((nv, nv))
    A = sp.bmat([[Ky, Z0, -keep @ B],
                 [-keep @ (P.T @ P), Ky, None],
                 [None, B.T, spec.lam * sp.diags(mesh.areas)]], format="csc")
    gy = fem.interpolate(mesh, spec.g_state)
    gp = fem.interpolate(mesh, spec.g_adjoint)
    rhs = np.concatenate([np.where(bd, gy, fem.assemble_load(mesh, spec.f)),
                          np.where(bd, gp, -(P.T @ spec.targets)),
                          np.zeros(ne)])
    x = spla.spsolve(A, rhs)
    return x[:nv], x[nv:2 * nv], x[2 * nv:]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_unconstrained_matches_monolithic_kkt(n):
    spec, mesh = _prepared(n, 2 if n < 4 else 1)
    spec = spec.with_bounds(-1e6, 1e6)
    sol = pdas_solve(spec, mesh)
    y, p, u = _kkt_oracle(spec, mesh)
    assert not np.any(sol.active_lower | sol.active_upper)
    for got, ref in ((sol.y, y), (sol.p, p), (sol.u, u)):
        assert np.max(np.abs(got - ref)) <= 1e-8


def test_narrow_box_forces_control():
    spec, mesh = _prepared(2)
    spec = spec.with_bounds(0.3, 0.3 + 1e-12)
    sol = pdas_solve(spec, mesh)
    assert np.all((sol.u >= 0.3) & (sol.u <= 0.3 + 1e-12))
    y_ref = solve_state(spec, mesh, np.full(mesh.n_elements, 0.3))
    assert np.max(np.abs(sol.y - y_ref)) <= 1e-10


def test_example1_vi_residual_and_iterations():
    spec = make_example(1)
    mesh = prerefine_for_observations(build_initial_mesh("unit_square", 4), spec.Z)
    sol = pdas_solve(spec, mesh)
    assert sol.iterations <= 30
    assert not np.any(sol.active_lower & sol.active_upper)
    assert np.all((sol.u >= spec.a) & (sol.u <= spec.b))
    rng = np.random.default_rng(5)
    for _ in range(100):
        v = rng.uniform(spec.a, spec.b, mesh.n_elements)
        assert vi_residual(spec, mesh, sol, v) >= -1e-9
    # inactive elements satisfy stationarity
    inactive = ~(sol.active_lower | sol.active_upper)
    pbar = fem.element_avg_p1(sol.p, mesh)
    assert np.max(np.abs(spec.lam * sol.u + pbar)[inactive]) <= 1e-9


def test_single_element_perturbations_do_not_decrease_cost():
    spec = make_example(1)
    mesh = prerefine_for_observations(build_initial_mesh("unit_square", 4), spec.Z)
    disc = Discretization(spec, mesh)
    sol = pdas_solve(spec, mesh, disc=disc)
    J0 = compute_cost(spec, mesh, sol)
    rng = np.random.default_rng(2)
    delta = 1e-2
    for t in rng.choice(mesh.n_elements, 25, replace=False):
        for sign in (1.0, -1.0):
            u = sol.u.copy()
            u[t] = np.clip(u[t] + sign * delta, spec.a, spec.b)
            step = abs(u[t] - sol.u[t])
            if step == 0:
                continue
            trial = DiscreteSolution(disc.state(u), sol.p, u, sol.mu, sol.active_lower,
                                     sol.active_upper)
            assert compute_cost(spec, mesh, trial) >= J0 - 1e-9 * step


def test_warm_start_matches_cold_start():
    spec, mesh = _prepared(1)
    sol = pdas_solve(spec, mesh)
    fine, tr = refine_with_transfer(mesh, np.arange(0, mesh.n_elements, 3))
    warm = DiscreteSolution(tr.prolong_p1(sol.y), tr.prolong_p1(sol.p), tr.prolong_p0(sol.u),
                            tr.prolong_p0(sol.mu), tr.prolong_p0(sol.active_lower),
                            tr.prolong_p0(sol.active_upper))
    a = pdas_solve(spec, fine, warm_start=warm)
    b = pdas_solve(spec, fine)
    for x, y in ((a.y, b.y), (a.p, b.p), (a.u, b.u)):
        assert np.max(np.abs(x - y)) <= 1e-8


def test_control_linear_in_dirac_coefficients():
    m = build_initial_mesh("unit_square", 4)
    Z = [(0.5, 0.5), (0.25, 0.75)]
    one = pdas_solve(ProblemSpec("unit_square", Z, [1.0, -0.5], -1e6, 1e6), m)
    two = pdas_solve(ProblemSpec("unit_square", Z, [2.0, -1.0], -1e6, 1e6), m)
    assert np.allclose(two.u, 2 * one.u, atol=1e-10)
    assert np.allclose(two.p, 2 * one.p, atol=1e-10)


def test_iteration_limit_raises():
    spec, mesh = _prepared(2, 4)  # needs two active-set updates
    with pytest.raises(PdasError):
        pdas_solve(spec, mesh, PdasConfig(max_outer=1))


def test_bad_pdas_parameter():
    spec, mesh = _prepared(2)
    with pytest.raises(ValueError):
        pdas_solve(spec, mesh, PdasConfig(c=0.0))


def _cost(spec, mesh, y, u):
    sol = DiscreteSolution(y, None, u, None, None, None)
    return compute_cost(spec, mesh, sol)


def test_cost_examples():
    m = build_initial_mesh("unit_square", 2)
    spec = ProblemSpec("unit_square", CENTER, [0.0], -5, 5)
    zero_v, zero_e = np.zeros(m.n_vertices), np.zeros(m.n_elements)
    assert _cost(spec, m, zero_v, zero_e) == 0.0
    assert _cost(spec, m, zero_v + 2.0, zero_e) == pytest.approx(2.0)
    assert _cost(spec, m, zero_v, zero_e + 1.0) == pytest.approx(0.5)
