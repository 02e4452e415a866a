import numpy as np
import pytest

from hjadj.elliptic import (RegularizedProblem, apriori_bounds_check,
                            closed_form_reference, residual, solve,
                            solve_with_continuation)
from hjadj.grid import ScalarField, build_grid, gradient
from hjadj.hamiltonians import make_builtin


def unit_interval(n=129):
    return build_grid(1, n, 1.0, "dirichlet_box")


def symmetric_interval(n=513):
    return build_grid(1, n, 2.0, "dirichlet_box", origin=-1.0)


def test_problem_invariants():
    g = build_grid(1, 16, 1.0, "periodic")
    model = make_builtin("eikonal")
    with pytest.raises(ValueError):
        RegularizedProblem(model=model, grid=g, lam=0.0, nu=0.1)  # lam=0 on torus
    with pytest.raises(ValueError):
        RegularizedProblem(model=model, grid=g, lam=1.0, nu=0.0)
    with pytest.raises(ValueError):
        RegularizedProblem(model=model, grid=g, lam=-1.0, nu=0.1)


def test_constant_solution_two_iterations():
    # H = |p|^2/2 + c has the constant solution u = -c for lam = 1
    g = build_grid(1, 64, 1.0, "periodic")
    model = make_builtin("quadratic_potential", potential=[(0, 2.5)])
    res = solve(RegularizedProblem(model=model, grid=g, lam=1.0, nu=0.3))
    assert res.converged
    assert res.newton_iters <= 2
    assert np.max(np.abs(res.u.values + 2.5)) < 1e-10


def test_laplace_unit_closed_form_stencil_exact():
    g = unit_interval(129)
    model = make_builtin("constant", value=0.0)
    f = ScalarField.full(g, 1.0)
    res = solve(RegularizedProblem(model=model, grid=g, lam=0.0, nu=0.1, f=f))
    ref = closed_form_reference("laplace_unit", 0.1, g)
    assert res.converged
    assert np.max(np.abs(res.u.values - ref.values)) <= 1e-10
    assert res.u.values.max() == pytest.approx(1.0 / (8 * 0.1), abs=1e-9)


def test_drift_closed_form():
    g = unit_interval(513)
    model = make_builtin("linear_drift", b=(1.0,), c=-1.0)
    res = solve(RegularizedProblem(model=model, grid=g, lam=0.0, nu=0.05))
    ref = closed_form_reference("drift", 0.05, g)
    assert res.converged
    assert np.max(np.abs(res.u.values - ref.values)) <= 1e-3
    assert res.u.values.max() <= 1.0


def test_drift_closed_form_small_eps_no_overflow():
    g = unit_interval(513)
    ref = closed_form_reference("drift", 1e-4, g)
    assert np.all(np.isfinite(ref.values))
    assert ref.values.max() <= 1.0
    assert abs(ref.values[0]) < 1e-15 and abs(ref.values[-1]) < 1e-12


def test_closed_form_rejects_bad_requests():
    g = unit_interval()
    with pytest.raises(ValueError):
        closed_form_reference("unknown", 0.1, g)
    g2 = symmetric_interval()
    with pytest.raises(ValueError):
        closed_form_reference("laplace_unit", 0.1, g2)


def test_eikonal_dirichlet_near_distance_function():
    g = symmetric_interval(513)
    model = make_builtin("eikonal")
    res = solve(RegularizedProblem(model=model, grid=g, lam=0.0, nu=0.01),
                init=None, max_iters=80)
    x = g.axis_coords(0)
    # O(sqrt(eps)) closeness to the distance function 1 - |x|
    assert np.max(np.abs(res.u.values - (1 - np.abs(x)))) <= np.sqrt(0.01)


def test_eikonal_matches_analytic_profile():
    # u = eps*(ln cosh(1/eps) - ln cosh(x/eps)) solves |u'|^2 - 1 = eps u''
    eps = 0.05
    g = symmetric_interval(1025)
    model = make_builtin("eikonal")
    res = solve(RegularizedProblem(model=model, grid=g, lam=0.0, nu=eps))
    x = g.axis_coords(0)

    def lncosh(y):
        return np.logaddexp(y, -y) - np.log(2.0)

    exact = eps * (lncosh(1.0 / eps) - lncosh(x / eps))
    assert res.converged
    assert np.max(np.abs(res.u.values - exact)) < 3e-5


def test_residual_constant_solution_tiny():
    g = build_grid(1, 64, 1.0, "periodic")
    model = make_builtin("quadratic_potential", potential=[(0, 1.5)])
    prob = RegularizedProblem(model=model, grid=g, lam=1.0, nu=0.2)
    r = residual(prob, ScalarField.full(g, -1.5))
    assert np.max(np.abs(r.values)) <= 1e-12


def test_residual_scales_linearly_with_perturbation():
    g = symmetric_interval(257)
    model = make_builtin("eikonal")
    prob = RegularizedProblem(model=model, grid=g, lam=0.0, nu=0.1)
    base = solve(prob)
    assert base.converged
    x = g.axis_coords(0)
    bump = np.exp(-((x / 0.4) ** 2)) * (1 - x**2)
    norms = []
    for eta in (1e-6, 5e-7):
        u = ScalarField(g, base.u.values + eta * bump)
        norms.append(np.max(np.abs(residual(prob, u).values)))
    assert norms[0] / norms[1] == pytest.approx(2.0, rel=0.15)


def test_newton_superlinear_tail():
    g = symmetric_interval(257)
    model = make_builtin("eikonal")
    res = solve(RegularizedProblem(model=model, grid=g, lam=0.0, nu=0.1), tol=1e-13)
    hist = res.residual_history
    # contraction is only meaningful above the rounding floor of the residual
    lo = max(1e-11, 100.0 * res.residual_floor)
    tail = [(a, b) for a, b in zip(hist, hist[1:]) if lo <= a <= 1e-3 and b > 0]
    assert tail, "no iterates in the tail region"
    for a, b in tail:
        assert b <= 10.0 * a**1.5


def test_nonconvergence_reports_best_iterate():
    g = symmetric_interval(257)
    model = make_builtin("eikonal")
    res = solve(RegularizedProblem(model=model, grid=g, lam=0.0, nu=0.01),
                max_iters=1)
    assert not res.converged
    assert res.newton_iters == 1
    assert np.all(np.isfinite(res.u.values))


def test_discretization_second_order_at_fixed_eps():
    model = make_builtin("eikonal")
    sols = {}
    for n in (129, 257, 513):
        g = symmetric_interval(n)
        sols[n] = solve(RegularizedProblem(model=model, grid=g, lam=0.0, nu=0.1)).u.values
    d1 = np.max(np.abs(sols[257][::2] - sols[129]))
    d2 = np.max(np.abs(sols[513][::2] - sols[257]))
    order = np.log2(d1 / d2)
    assert order >= 1.7


def test_comparison_sanity_nonnegative():
    for name in ("eikonal", "quartic1d"):
        model = make_builtin(name)
        g = symmetric_interval(257)
        res = solve_with_continuation(
            lambda e: RegularizedProblem(model=model, grid=g, lam=0.0, nu=e),
            0.05, start=0.4)
        assert res.converged
        assert res.u.values.min() >= -1e-8


def test_apriori_bounds_uniform_over_sweep():
    model = make_builtin("eikonal")
    g = symmetric_interval(513)
    grads = []
    init = None
    for eps in (0.1, 0.05, 0.025):
        prob = RegularizedProblem(model=model, grid=g, lam=0.0, nu=eps)
        res = solve(prob, init=init)
        init = res.u
        assert res.converged
        _, sup_grad = apriori_bounds_check(res, prob)
        grads.append(sup_grad)
    assert max(grads) / min(grads) <= 1.25


def test_apriori_bounds_flag_degenerate_growth():
    # the pure-Laplace problem has sup u = 1/(8 eps): visible blow-up
    model = make_builtin("constant", value=-1.0)
    sups = []
    for eps in (0.1, 0.05):
        g = unit_interval(257)
        prob = RegularizedProblem(model=model, grid=g, lam=0.0, nu=eps)
        res = solve(prob)
        sup_u, _ = apriori_bounds_check(res, prob)
        assert sup_u == pytest.approx(1.0 / (8 * eps), rel=1e-3)
        sups.append(sup_u)
    assert sups[1] / sups[0] == pytest.approx(2.0, rel=1e-3)


def test_constant_solution_gradient_tiny():
    g = build_grid(1, 64, 1.0, "periodic")
    model = make_builtin("quadratic_potential", potential=[(0, 1.0)])
    prob = RegularizedProblem(model=model, grid=g, lam=1.0, nu=0.2)
    res = solve(prob)
    _, sup_grad = apriori_bounds_check(res, prob)
    assert sup_grad <= 1e-10


def test_continuation_reaches_small_eps_quartic():
    g = symmetric_interval(513)
    model = make_builtin("quartic1d")
    res = solve_with_continuation(
        lambda e: RegularizedProblem(model=model, grid=g, lam=0.0, nu=e),
        0.05, start=0.4)
    assert res.converged
    # gradient saturates near the positive root of H
    p_star = np.sqrt(1 + np.sqrt(2.0))
    du = gradient(res.u).values[0]
    assert abs(np.max(np.abs(du)) - p_star) < 0.05


def test_two_dim_solve_converges():
    g = build_grid(2, (48, 48), (2.0, 2.0), "dirichlet_box", origin=(-1.0, -1.0))
    model = make_builtin("eikonal")
    res = solve_with_continuation(
        lambda e: RegularizedProblem(model=model, grid=g, lam=0.0, nu=e),
        0.1, start=0.4)
    assert res.converged
    assert res.u.values.min() >= -1e-8
    # boundary pinned to zero
    assert np.max(np.abs(res.u.values[g.boundary_mask])) == 0.0
