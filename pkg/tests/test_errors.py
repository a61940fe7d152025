import numpy as np
import pytest

from pointtrack import fem
from pointtrack.errors import (ErrorReport, ZeroErrorError, effectivity, lshape_angle,
                               make_example, norm_l2_control_error, norm_linf_error,
                               norm_weighted_h1_error, subdivided_rule)
from pointtrack.estimator import WeightRho, combine
from pointtrack.mesh import Domain, Mesh, build_initial_mesh, uniform_refine

UNIT_TRI = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def _random_points(domain, n, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = (0.0, 1.0) if domain is Domain.UNIT_SQUARE else (-1.0, 1.0)
    x = rng.uniform(lo, hi, (4 * n, 2))
    return x[domain.contains(x, strict=True)][:n]


def test_example2_values():
    ex = make_example(2)
    assert ex.exact.y(np.array([0.5, 0.5])) == pytest.approx(2.0)
    x = np.array([0.25, 0.25])
    assert -ex.exact.lap_y(x) == pytest.approx(24.0)
    assert ex.exact.p(x) == pytest.approx(-np.log(np.sqrt(0.125)) / (2 * np.pi))
    # log(sqrt(1/8)) = -1.03972..., so the value is 0.1654767, not 0.165338
    assert ex.exact.p(x) == pytest.approx(0.1654767, abs=1e-7)
    assert ex.exact.u(x) == pytest.approx(-0.2)
    assert ex.f(x) == pytest.approx(24.2)


def test_example3_targets_are_consistent():
    ex = make_example(3)
    assert ex.exact.y(np.array([0.75, 0.75])) == pytest.approx(2.0)
    assert ex.exact.y(np.array([0.75, 0.25])) == pytest.approx(1.5)
    assert np.array_equal(ex.targets, [1.0, 0.5, 0.5, 1.0])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_unit_dirac_coefficients(n):
    ex = make_example(n)
    assert np.max(np.abs(ex.exact.y(ex.Z) - ex.targets - 1.0)) <= 1e-12


def test_example4_target():
    ex = make_example(4)
    assert ex.targets[0] == pytest.approx(2.0 ** (-4 / 3) - 1.0, abs=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_exact_control_is_feasible(n):
    ex = make_example(n)
    u = ex.exact.u(_random_points(ex.domain, 10_000, n))
    assert np.all((u >= ex.a) & (u <= ex.b))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_adjoint_flux_is_unit(n):
    ex = make_example(n)
    z, r = ex.Z[0], 1e-3
    t = np.linspace(0, 2 * np.pi, 2001)[:-1]
    nrm = np.column_stack([np.cos(t), np.sin(t)])
    flux = np.mean(np.sum(ex.exact.grad_p(z + r * nrm) * nrm, axis=1)) * 2 * np.pi * r
    assert flux == pytest.approx(-1.0, abs=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_derivatives_against_differences(n):
    ex = make_example(n)
    x = _random_points(ex.domain, 50, 7)
    x = x[np.linalg.norm(x, axis=1) > 0.1]  # away from the re-entrant corner
    h = 1e-4
    e = np.eye(2) * h
    fd_grad = np.stack([(ex.exact.y(x + e[k]) - ex.exact.y(x - e[k])) / (2 * h)
                        for k in range(2)], axis=-1)
    fd_lap = sum(ex.exact.y(x + e[k]) - 2 * ex.exact.y(x) + ex.exact.y(x - e[k])
                 for k in range(2)) / h**2
    assert np.allclose(ex.exact.grad_y(x), fd_grad, atol=1e-6)
    assert np.allclose(ex.exact.lap_y(x), fd_lap, atol=1e-4)


def test_lshape_solution_vanishes_on_corner_edges():
    ex = make_example(4)
    s = np.linspace(0.01, 1, 20)
    assert np.allclose(ex.exact.y(np.column_stack([s, 0 * s])), 0.0, atol=1e-14)
    assert np.allclose(ex.exact.y(np.column_stack([0 * s, -s])), 0.0, atol=1e-12)
    th = lshape_angle(_random_points(Domain.LSHAPE, 1000))
    assert th.min() >= 0 and th.max() <= 1.5 * np.pi


def test_example1_has_homogeneous_data():
    ex = make_example(1)
    assert ex.exact is None and ex.g_state is None and ex.g_adjoint is None
    assert (ex.a, ex.b) == (-0.5, 0.5)
    with pytest.raises(ValueError):
        make_example(5)


def test_state_with_exact_control_converges():
    ex = make_example(2)
    m = build_initial_mesh("unit_square", 2)
    errs = []
    for _ in range(3):
        u = fem.p0_projection(m, ex.exact.u)
        load = fem.assemble_load(m, ex.f, u)
        y = fem.solve_dirichlet(fem.assemble_stiffness(m), load,
                                fem.DirichletData.from_function(m, ex.exact.y), m)
        errs.append(norm_linf_error(m, y, ex.exact.y))
        m = uniform_refine(m, 2)
    assert errs[0] > errs[1] > errs[2]


def test_linf_examples():
    m = build_initial_mesh("unit_square", 2)
    lin = lambda x: 1 + x[..., 0] - 2 * x[..., 1]
    assert norm_linf_error(m, fem.interpolate(m, lin), lin) <= 1e-12
    assert norm_linf_error(m, np.zeros(m.n_vertices), 1.0) == 1.0
    sq = lambda x: x[..., 0] ** 2
    err = norm_linf_error(UNIT_TRI, fem.interpolate(UNIT_TRI, sq), sq)
    assert err >= 0.2
    assert err == pytest.approx(0.25)


def test_weighted_norm_examples():
    m = build_initial_mesh("unit_square", 2)
    w = WeightRho.for_points([(0.5, 0.5)], 1.5, "unit_square")
    aff = lambda x: 2 * x[..., 0] - x[..., 1]
    grad = lambda x: np.broadcast_to([2.0, -1.0], x.shape)
    assert norm_weighted_h1_error(m, fem.interpolate(m, aff), grad, w) <= 1e-13
    # two far points and a tiny d_Z give weight 1 everywhere
    flat = WeightRho(np.array([[5.0, 5.0], [-5.0, -5.0]]), 1.5, 1e-3)
    unit = lambda x: np.broadcast_to([-1.0, 0.0], x.shape)
    assert norm_weighted_h1_error(UNIT_TRI, np.zeros(3), unit, flat) == pytest.approx(
        np.sqrt(0.5), abs=1e-14)


def test_weighted_norm_singular_integrand():
    # rho |grad| integrand for |x-z|^1.5 |x-z|^-2: integrable, compare with polar closed form
    z = np.array([0.5, 0.5])
    w = WeightRho.for_points([z], 1.5, "unit_square")
    grad = lambda x: (x - z) / np.sum((x - z) ** 2, axis=-1, keepdims=True) / (2 * np.pi)
    m = uniform_refine(build_initial_mesh("unit_square", 4), 2)
    val = norm_weighted_h1_error(m, np.zeros(m.n_vertices), grad, w, depth=4) ** 2
    # integral over the square of r^-0.5 / (4 pi^2), computed on a fine polar-free grid
    g = (np.arange(4000) + 0.5) / 4000 - 0.5
    X, Y = np.meshgrid(g, g)
    ref = np.mean((X**2 + Y**2) ** -0.25) / (4 * np.pi**2)
    assert val == pytest.approx(ref, rel=2e-3)


def test_control_norm_examples():
    m = build_initial_mesh("unit_square", 2)
    e0 = np.zeros(m.n_elements)
    assert norm_l2_control_error(m, e0 + 0.3, 0.3) == 0.0
    assert norm_l2_control_error(m, e0, 1.0) == pytest.approx(1.0)
    assert norm_l2_control_error(m, e0, lambda x: x[..., 0]) == pytest.approx(1 / np.sqrt(3))


def test_subdivided_rule():
    r = subdivided_rule(2)
    assert r.size == 16 * subdivided_rule(0).size
    assert r.weights.sum() == pytest.approx(1.0)
    assert r.exactness_error() <= 1e-12


def test_report_and_effectivity():
    rep = ErrorReport(0.3, 0.4, 1.2)
    assert rep.err_total == pytest.approx(1.3, abs=1e-15)
    assert effectivity(ErrorReport(2.5, 0.0, 0.0), 5.0) == 2.0
    ind = combine([2.0], [2.0], [1.0])
    assert effectivity(ErrorReport(2.5, 0.0, 0.0), ind) == 2.0
    with pytest.raises(ZeroErrorError):
        effectivity(ErrorReport(0.0, 0.0, 0.0), 1.0)
