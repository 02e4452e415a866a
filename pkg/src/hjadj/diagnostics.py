"""Adjoint-weighted integrals, identity residuals, sensitivity estimates,
supersolution constructions and log-log rate fits.

The quantities here are the ones that stay bounded (or decay at a known
rate) as the viscosity parameter shrinks; sweeps over eps or theta feed
them into fit_rate and the boundedness checks.  Reference solutions for
error sweeps are closed forms where available, otherwise a documented
fine-grid solve at a much smaller parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import adjoint as adjoint_mod
from .adjoint import AdjointTrajectory
from .elliptic import RegularizedProblem, SolveResult, solve
from .grid import Grid, ScalarField, Topology, gradient, laplacian
from .hamiltonians import HamiltonianModel


@dataclass
class RateFit:
    """Least-squares line on (log param, log error); slope is the observed
    rate.  ``exact`` marks degenerate sweeps whose errors sit at round-off."""

    parameters: list
    errors: list
    slope: float
    intercept: float
    r_squared: float
    exact: bool = False


def fit_rate(params, errors) -> RateFit:
    params = [float(p) for p in params]
    errors = [float(e) for e in errors]
    if len(params) < 4 or len(errors) != len(params):
        raise ValueError("need at least 4 (param, error) pairs")
    if any(b >= a for a, b in zip(params, params[1:])):
        raise ValueError("parameters must be strictly decreasing")
    if any(e <= 0 for e in errors):
        raise ValueError("errors must be positive")
    lx = np.log(params)
    ly = np.log(errors)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(params, errors, float(slope), float(intercept), r2)


def _second_diff(v: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    h2 = grid.spacing[axis] ** 2
    if grid.is_periodic:
        return (np.roll(v, -1, axis=axis) - 2.0 * v + np.roll(v, 1, axis=axis)) / h2
    out = np.zeros_like(v)
    n = grid.shape[axis]
    mid = [slice(None)] * grid.dim
    mid[axis] = slice(1, n - 1)
    up = [slice(None)] * grid.dim
    up[axis] = slice(2, n)
    dn = [slice(None)] * grid.dim
    dn[axis] = slice(0, n - 2)
    out[tuple(mid)] = (v[tuple(up)] - 2.0 * v[tuple(mid)] + v[tuple(dn)]) / h2
    return out


def _mixed_diff(v: np.ndarray, grid: Grid) -> np.ndarray:
    hx, hy = grid.spacing
    if grid.is_periodic:
        vpp = np.roll(np.roll(v, -1, 0), -1, 1)
        vpm = np.roll(np.roll(v, -1, 0), 1, 1)
        vmp = np.roll(np.roll(v, 1, 0), -1, 1)
        vmm = np.roll(np.roll(v, 1, 0), 1, 1)
        return (vpp - vpm - vmp + vmm) / (4.0 * hx * hy)
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (4.0 * hx * hy)
    return out


def hessian_norm_sq(f: ScalarField) -> ScalarField:
    """Squared Frobenius norm of the central-difference Hessian; boundary
    entries are zero on Dirichlet boxes."""
    grid = f.grid
    v = f.values
    out = np.zeros(grid.shape)
    for d in range(grid.dim):
        out += _second_diff(v, grid, d) ** 2
    if grid.dim == 2:
        out += 2.0 * _mixed_diff(v, grid) ** 2
    if not grid.is_periodic:
        out[grid.boundary_mask] = 0.0
    return ScalarField(grid, out)


def _weighted_sum(values: np.ndarray, weights: np.ndarray) -> float:
    return math.fsum((values * weights).ravel().tolist())


def weighted_hessian_integral_parabolic(u: ScalarField, traj: AdjointTrajectory,
                                        nu: float) -> float:
    """Trapezoid-in-time, grid-quadrature-in-space value of

        int_0^T int nu * e^t * |D2 u|^2 * sigma(.,t) dx dt

    with the Hessian by second central differences.  The e^t factor is
    carried explicitly here; the adjoint itself is solved without it."""
    hs = hessian_norm_sq(u).values
    w = u.grid.quad_weights
    order = np.argsort(traj.times)
    ts = traj.times[order]
    g = np.array([
        nu * math.exp(t) * _weighted_sum(hs * traj.sigma[k].values, w)
        for t, k in zip(ts, order)
    ])
    return float(np.trapezoid(g, ts))


def weighted_hessian_integral_elliptic(u: ScalarField, sigma: ScalarField,
                                       nu: float) -> float:
    """int nu * |D2 u|^2 * sigma dx over the box."""
    hs = hessian_norm_sq(u).values
    return nu * _weighted_sum(hs * sigma.values, u.grid.quad_weights)


def gradient_identity_residual(u: ScalarField, model: HamiltonianModel,
                               lam: float, nu: float,
                               P: np.ndarray | None = None,
                               f: ScalarField | None = None) -> float:
    """Sup norm over interior nodes of the discrete defect of the gradient
    identity satisfied by w = |Du|^2/2:

        2*lam*w + D_pH(x,P+Du).Dw + D_xH(x,P+Du).Du
            = nu*Lap(w) - nu*|D2 u|^2  (+ Df.Du with forcing)

    Evaluated with the same central stencils as the solver; the defect must
    shrink as h -> 0 at fixed nu.
    """
    grid = u.grid
    P = np.zeros(grid.dim) if P is None else np.asarray(P, dtype=float)
    du = gradient(u)
    dup = du.as_points()
    w = ScalarField(grid, 0.5 * np.sum(du.values**2, axis=0))
    dw = gradient(w).as_points()
    b = model.grad_p(grid.coords, P + dup)
    gx = model.grad_x(grid.coords, P + dup)
    r = (2.0 * lam * w.values
         + np.sum(b * dw, axis=-1)
         + np.sum(gx * dup, axis=-1)
         - nu * laplacian(w).values
         + nu * hessian_norm_sq(u).values)
    if f is not None:
        df = gradient(f).as_points()
        r = r - np.sum(df * dup, axis=-1)
    if grid.is_periodic:
        return float(np.max(np.abs(r)))
    return float(np.max(np.abs(r[grid.interior_mask])))


def epsilon_sensitivity(problem_family, epsilon: float, h_eps: float | None = None,
                        base_init: ScalarField | None = None,
                        scale_by_param: bool = False,
                        tol: float = 1e-10, max_iters: int = 60) -> float:
    """Sup norm of the centered parameter derivative
    (u^{eps+h} - u^{eps-h}) / (2h) from two warm-started solves.

    ``problem_family`` maps a parameter value to a RegularizedProblem on a
    fixed grid.  With scale_by_param=True the difference is taken of
    param * u instead (the effective-Hamiltonian sensitivity).  The default
    step eps/20 balances truncation against solver noise.
    """
    if h_eps is None:
        h_eps = epsilon / 20.0
    if h_eps > epsilon / 10.0:
        raise ValueError("h_eps must be at most epsilon/10")
    base = solve(problem_family(epsilon), init=base_init, tol=tol, max_iters=max_iters)
    up = solve(problem_family(epsilon + h_eps), init=base.u, tol=tol, max_iters=max_iters)
    dn = solve(problem_family(epsilon - h_eps), init=base.u, tol=tol, max_iters=max_iters)
    a = up.u.values
    b = dn.u.values
    if scale_by_param:
        a = (epsilon + h_eps) * a
        b = (epsilon - h_eps) * b
    return float(np.max(np.abs(a - b)) / (2.0 * h_eps))


@dataclass
class SupersolutionParams:
    """Coefficients of y = k*(alpha*x.Du + beta*u) + M.  The constraint
    (2*alpha+beta)/(alpha+beta) = gamma ties the construction to the margin
    certificate; k = 1/((alpha+beta)*delta) normalizes the excess to 1."""

    alpha: float
    beta: float
    gamma: float
    delta: float
    k: float
    M: float

    def __post_init__(self):
        s = self.alpha + self.beta
        if s <= 0:
            raise ValueError("alpha + beta must be positive")
        if abs((2.0 * self.alpha + self.beta) / s - self.gamma) > 1e-12:
            raise ValueError("(2*alpha+beta)/(alpha+beta) must equal gamma")
        if abs(self.k - 1.0 / (s * self.delta)) > 1e-12 * max(1.0, abs(self.k)):
            raise ValueError("k must equal 1/((alpha+beta)*delta)")


def supersolution_params(gamma: float, delta: float, M: float = 0.0) -> SupersolutionParams:
    """Canonical choice alpha = gamma-1, beta = 2-gamma (so alpha+beta = 1
    and the ratio constraint holds), k = 1/delta."""
    alpha = gamma - 1.0
    beta = 2.0 - gamma
    return SupersolutionParams(alpha, beta, gamma, delta, 1.0 / delta, M)


def _x_dot_grad(f: ScalarField) -> np.ndarray:
    du = gradient(f).values
    x = np.moveaxis(f.grid.coords, -1, 0)
    return np.sum(x * du, axis=0)


def _hessian_proxy(u: ScalarField) -> float:
    return float(np.sqrt(np.max(hessian_norm_sq(u).values)))


def supersolution_tolerance(u: ScalarField) -> float:
    """Finite-h slack for the pointwise supersolution excess."""
    return 10.0 * max(u.grid.spacing) * (1.0 + _hessian_proxy(u))


def supersolution_check(u: ScalarField, model: HamiltonianModel,
                        params: SupersolutionParams, nu: float) -> tuple[float, bool]:
    """Evaluate E = DH(Du).Dy - nu*Lap(y) - 1 at interior nodes for
    y = k*(alpha*x.Du + beta*u) + M; the continuous excess is >= 0 under the
    margin condition, so passed means min E >= -tolerance(h)."""
    grid = u.grid
    if grid.topology is not Topology.DIRICHLET_BOX:
        raise ValueError("the supersolution check is posed on a Dirichlet box")
    z = params.alpha * _x_dot_grad(u) + params.beta * u.values
    y = ScalarField(grid, params.k * z + params.M)
    dy = gradient(y).as_points()
    b = model.grad_p(grid.coords, gradient(u).as_points())
    e = np.sum(b * dy, axis=-1) - nu * laplacian(y).values - 1.0
    min_excess = float(np.min(e[grid.interior_mask]))
    return min_excess, min_excess >= -supersolution_tolerance(u)


def supersolution_field(u: ScalarField, params: SupersolutionParams) -> ScalarField:
    z = params.alpha * _x_dot_grad(u) + params.beta * u.values
    return ScalarField(u.grid, params.k * z + params.M)


def bounded_dual_check(u: ScalarField, model: HamiltonianModel, nu: float,
                       params: SupersolutionParams) -> bool:
    """Solve the unit-forcing dual problem and verify 0 <= v <= y pointwise
    against the supersolution y (finite-h slack as in supersolution_check).
    M must be large enough for y >= 0 on the boundary."""
    one = ScalarField.full(u.grid, 1.0)
    v = adjoint_mod.solve_dual_forward(u, model, nu, one)
    y = supersolution_field(u, params)
    slack = supersolution_tolerance(u) * max(1.0, float(np.max(v.values)))
    return bool(np.all(v.values >= -1e-10) and np.all(v.values <= y.values + slack))


@dataclass
class ScalingParams:
    """Coefficients of the comparison perturbation z = s*v + t*(x.Dv + M)
    with t = (1+theta)^gamma - (1+theta) and s = 2(1+theta) - (1+theta)^gamma,
    chosen so that (s+t)^gamma = s + 2t exactly."""

    theta: float
    s: float
    t: float
    gamma: float
    M: float

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        g = 1.0 + self.theta
        if abs(self.t - (g**self.gamma - g)) > 1e-10:
            raise ValueError("t must equal (1+theta)^gamma - (1+theta)")
        if abs(self.s - (2.0 * g - g**self.gamma)) > 1e-10:
            raise ValueError("s must equal 2(1+theta) - (1+theta)^gamma")
        if abs((self.s + self.t) ** self.gamma - (self.s + 2.0 * self.t)) > 1e-10:
            raise ValueError("(s+t)^gamma must equal s+2t")


def scaling_params(theta: float, gamma: float, M: float) -> ScalingParams:
    g = 1.0 + theta
    return ScalingParams(theta, 2.0 * g - g**gamma, g**gamma - g, gamma, M)


def appendix_scaling_check(v: ScalarField, model: HamiltonianModel, nu: float,
                           theta: float, gamma: float, M: float) -> tuple[float, bool]:
    """Build z = s*v + t*(x.Dv + M) and evaluate H(Dz) - nu*Lap(z) at
    interior nodes; a strict supersolution (min > 0) is what the scaled
    comparison argument needs.  theta must be small (<= 0.1)."""
    if theta > 0.1:
        raise ValueError("theta must be at most 0.1")
    params = scaling_params(theta, gamma, M)
    grid = v.grid
    z = ScalarField(grid, params.s * v.values + params.t * (_x_dot_grad(v) + params.M))
    dz = gradient(z).as_points()
    e = model.h(grid.coords, dz) - nu * laplacian(z).values
    min_excess = float(np.min(e[grid.interior_mask]))
    return min_excess, min_excess > 0.0


def distance_to_boundary(grid: Grid) -> ScalarField:
    """Distance to the box boundary (the limit profile of the eikonal
    Dirichlet problem)."""
    if grid.topology is not Topology.DIRICHLET_BOX:
        raise ValueError("distance reference needs a Dirichlet box")
    d = np.full(grid.shape, np.inf)
    for ax in range(grid.dim):
        x = grid.coords[..., ax]
        lo = grid.origin[ax]
        hi = grid.origin[ax] + grid.lengths[ax]
        d = np.minimum(d, np.minimum(x - lo, hi - x))
    return ScalarField(grid, d)


def fine_grid_reference(model: HamiltonianModel, grid: Grid, eps_ref: float,
                        lam: float = 0.0, refine: int = 4,
                        eps_start: float = 0.2, tol: float = 1e-10) -> ScalarField:
    """Documented oracle for sweeps without a closed form: solve at a much
    smaller viscosity on a ``refine``-times finer grid (nodes nest) and
    sample back to the production grid."""
    from .elliptic import solve_with_continuation
    from .grid import build_grid

    if grid.is_periodic:
        counts = tuple(refine * n for n in grid.shape)
    else:
        counts = tuple(refine * (n - 1) + 1 for n in grid.shape)
    fine = build_grid(grid.dim, counts, grid.lengths, grid.topology, grid.origin)

    def make(eps):
        return RegularizedProblem(model=model, grid=fine, lam=lam, nu=eps)

    res = solve_with_continuation(make, eps_ref, start=eps_start, tol=tol)
    if not res.converged:
        raise RuntimeError("fine-grid reference solve did not converge")
    sampler = tuple(slice(None, None, refine) for _ in range(grid.dim))
    return ScalarField(grid, res.u.values[sampler].copy())


def write_sweep_csv(path, rows) -> None:
    """Rows of (param, error, sup_u, sup_grad, hessian_integral)."""
    lines = ["param,error,sup_u,sup_grad,hessian_integral"]
    for row in rows:
        lines.append(",".join(f"{float(v):.17g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def ratefit_text(fit: RateFit) -> str:
    lines = [
        "{",
        f'  "slope": {fit.slope:.12g},',
        f'  "intercept": {fit.intercept:.12g},',
        f'  "r_squared": {fit.r_squared:.12g},',
        f'  "exact": {str(fit.exact).lower()},',
        f'  "parameters": [{", ".join(f"{p:.12g}" for p in fit.parameters)}],',
        f'  "errors": [{", ".join(f"{e:.12g}" for e in fit.errors)}]',
        "}",
    ]
    return "\n".join(lines)
