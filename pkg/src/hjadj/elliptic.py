"""Damped-Newton solver for the unified regularized equation

    lam*u + H(x, P + Du) = nu*Lap(u) + f

on periodic grids (no boundary condition) or Dirichlet boxes (u = 0 on the
boundary).  Choosing (lam, nu, P) instantiates the discounted stationary
problem (lam=1, nu=eps), the Dirichlet problem (lam=0, nu=eps), and the
ergodic/cell approximations (lam=eps, nu=delta or lam=theta, nu=theta^2).

The gradient inside H is always central (nu > 0 regularizes); the Jacobian
linearizes the transport as D_pH(x, P+Du).D.  Linear solves: direct banded
factorization for 1D Dirichlet Jacobians, sparse LU for 1D periodic ones
(wrap-around couplings are not banded), ILU-preconditioned BiCGSTAB with a
direct fallback in 2D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (Grid, ScalarField, Topology, gradient, laplacian,
                   shifted_flat_indices)
from .hamiltonians import HamiltonianModel


class SingularLinearization(RuntimeError):
    """The Newton linearization could not be solved."""


@dataclass
class RegularizedProblem:
    model: HamiltonianModel
    grid: Grid
    lam: float
    nu: float
    P: np.ndarray | None = None
    f: ScalarField | None = None

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.lam == 0 and self.grid.topology is not Topology.DIRICHLET_BOX:
            raise ValueError("lam = 0 needs a Dirichlet box (periodic linearization "
                             "can be singular)")
        if self.P is None:
            self.P = np.zeros(self.grid.dim)
        else:
            self.P = np.asarray(self.P, dtype=float)
            if self.P.shape != (self.grid.dim,):
                raise ValueError(f"P must have shape ({self.grid.dim},)")
        if self.f is not None and self.f.grid.shape != self.grid.shape:
            raise ValueError("forcing lives on a different grid")


@dataclass
class SolveResult:
    u: ScalarField
    residual_sup: float
    newton_iters: int
    converged: bool
    residual_history: list = field(default_factory=list)
    residual_floor: float = 0.0


def _residual_floor(problem: RegularizedProblem, u: np.ndarray) -> float:
    """Rounding floor of the residual evaluation itself; the dominant term
    is the cancellation in the second differences, eps_mach * |u| * nu/h^2."""
    eps_m = np.finfo(float).eps
    sup_u = float(np.max(np.abs(u)))
    lap_scale = problem.nu * sum(2.0 / h**2 for h in problem.grid.spacing)
    f_scale = 0.0 if problem.f is None else float(np.max(np.abs(problem.f.values)))
    return 8.0 * eps_m * (sup_u * (problem.lam + lap_scale) + f_scale + 1.0)


def residual(problem: RegularizedProblem, u: ScalarField) -> ScalarField:
    """Pointwise R(u) = lam*u + H(x, P+Du) - nu*Lap(u) - f; Dirichlet
    boundary entries hold the boundary deviation u - 0."""
    grid = problem.grid
    du = gradient(u).as_points()
    hvals = problem.model.h(grid.coords, problem.P + du)
    r = problem.lam * u.values + hvals - problem.nu * laplacian(u).values
    if problem.f is not None:
        r = r - problem.f.values
    if not grid.is_periodic:
        r = r.copy()
        r[grid.boundary_mask] = u.values[grid.boundary_mask]
    return ScalarField(grid, r)


def _jacobian(problem: RegularizedProblem, u: ScalarField) -> sp.csr_matrix:
    grid = problem.grid
    n = grid.node_count
    du = gradient(u).as_points()
    b = problem.model.grad_p(grid.coords, problem.P + du)  # shape + (dim,)

    interior = grid.interior_mask.ravel() if not grid.is_periodic else np.ones(n, bool)
    rows_int = np.flatnonzero(interior)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    diag[rows_int] = problem.lam
    for d in range(grid.dim):
        h = grid.spacing[d]
        diag[rows_int] += 2.0 * problem.nu / h**2
        bd = b[..., d].ravel()
        for off in (+1, -1):
            nbr = shifted_flat_indices(grid, d, off).ravel()
            sgn = 1.0 if off == +1 else -1.0
            rows.append(rows_int)
            cols.append(nbr[rows_int])
            vals.append(sgn * bd[rows_int] / (2.0 * h) - problem.nu / h**2)
    # Dirichlet boundary rows pin u = 0
    diag[~interior] = 1.0
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    J = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return J


def _solve_linear(J: sp.csr_matrix, rhs: np.ndarray, grid: Grid) -> np.ndarray:
    try:
        if grid.dim == 1 and not grid.is_periodic:
            dia = J.todia()
            if set(dia.offsets.tolist()) <= {-1, 0, 1}:
                n = J.shape[0]
                ab = np.zeros((3, n))
                for off, row in zip(dia.offsets, dia.data):
                    if off == 1:
                        ab[0] = row
                    elif off == 0:
                        ab[1] = row
                    else:
                        ab[2] = row
                sol = scipy.linalg.solve_banded((1, 1), ab, rhs)
            else:
                sol = spla.splu(J.tocsc()).solve(rhs)
        elif grid.dim == 2:
            sol = _solve_2d(J, rhs)
        else:
            sol = spla.splu(J.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SingularLinearization(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularLinearization("linear solve produced non-finite values")
    return sol


def _solve_2d(J: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    A = J.tocsc()
    try:
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=30.0)
        M = spla.LinearOperator(A.shape, ilu.solve)
        sol, info = spla.bicgstab(A, rhs, rtol=1e-10, atol=0.0, M=M, maxiter=500)
        if info == 0:
            return sol
    except RuntimeError:
        pass
    return spla.splu(A).solve(rhs)


def solve(problem: RegularizedProblem, init: ScalarField | None = None,
          tol: float = 1e-10, max_iters: int = 50) -> SolveResult:
    """Damped Newton iteration on the discrete residual.

    Backtracking halves the step while the sup-norm residual fails to
    decrease (minimum step 2^-20).  Returns converged=False with the best
    iterate when the iteration budget runs out; raises
    SingularLinearization if a linear solve fails.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = problem.grid
    if init is None:
        u = np.zeros(grid.shape)
    else:
        u = init.values.copy()
    if not grid.is_periodic:
        u[grid.boundary_mask] = 0.0

    history = []
    best_u, best_rn = u.copy(), math.inf
    iters = 0
    rn = float(np.max(np.abs(residual(problem, ScalarField(grid, u)).values)))
    history.append(rn)
    if rn < best_rn:
        best_u, best_rn = u.copy(), rn
    while rn > tol and iters < max_iters:
        J = _jacobian(problem, ScalarField(grid, u))
        r = residual(problem, ScalarField(grid, u)).values.ravel()
        delta = _solve_linear(J, -r, grid)
        alpha = 1.0
        accepted = False
        while alpha >= 2.0**-20:
            u_try = u + alpha * delta.reshape(grid.shape)
            rn_try = float(np.max(np.abs(residual(problem, ScalarField(grid, u_try)).values)))
            if rn_try < rn:
                u, rn = u_try, rn_try
                accepted = True
                break
            alpha *= 0.5
        iters += 1
        if not accepted:
            break
        history.append(rn)
        if rn < best_rn:
            best_u, best_rn = u.copy(), rn
    floor = _residual_floor(problem, best_u)
    return SolveResult(
        u=ScalarField(grid, best_u),
        residual_sup=best_rn,
        newton_iters=iters,
        converged=best_rn <= max(tol, floor),
        residual_history=history,
        residual_floor=floor,
    )


def solve_with_continuation(make_problem, param: float, start: float = 0.2,
                            factor: float = 0.5, tol: float = 1e-10,
                            max_iters: int = 60,
                            init: ScalarField | None = None) -> SolveResult:
    """Solve at a small parameter value by warm-starting down a geometric
    ladder from ``start``; small-parameter problems develop near-kinks and
    a cold Newton start can stall on them.

    ``make_problem`` maps a parameter value to a RegularizedProblem on a
    fixed grid.
    """
    if param <= 0:
        raise ValueError("param must be positive")
    ladder = []
    v = start
    while v > param * (1.0 + 1e-12):
        ladder.append(v)
        v *= factor
    ladder.append(param)
    result = None
    for v in ladder:
        result = solve(make_problem(v), init=init, tol=tol, max_iters=max_iters)
        init = result.u
    return result


def closed_form_reference(name: str, epsilon: float, grid: Grid) -> ScalarField:
    """Exact nodal solutions of the two 1D constant-forcing problems on the
    unit interval with zero boundary values:

    laplace_unit   eps*v'' + 1 = 0        ->  v = (x - x^2)/(2 eps)
    drift          v' = eps*v'' + 1       ->  v = x - (e^{x/eps}-1)/(e^{1/eps}-1)

    The drift form is evaluated with negative exponents only, so it does not
    overflow for small eps.
    """
    if grid.dim != 1 or grid.topology is not Topology.DIRICHLET_BOX:
        raise ValueError("closed forms are defined on a 1D Dirichlet box")
    if abs(grid.origin[0]) > 1e-12 or abs(grid.lengths[0] - 1.0) > 1e-12:
        raise ValueError("closed forms are defined on the unit interval (0, 1)")
    x = grid.axis_coords(0)
    if name == "laplace_unit":
        v = (x - x**2) / (2.0 * epsilon)
    elif name == "drift":
        # (e^{x/eps}-1)/(e^{1/eps}-1) = e^{(x-1)/eps} (1-e^{-x/eps})/(1-e^{-1/eps})
        num = np.exp((x - 1.0) / epsilon) * (1.0 - np.exp(-x / epsilon))
        den = 1.0 - np.exp(-1.0 / epsilon)
        v = x - num / den
    else:
        raise ValueError(f"unknown closed form {name!r}")
    return ScalarField(grid, v)


def apriori_bounds_check(result: SolveResult, problem: RegularizedProblem) -> tuple[float, float]:
    """(sup|u|, sup|Du|) of a solve, central differences; used across
    parameter sweeps to confirm uniform boundedness."""
    sup_u = float(np.max(np.abs(result.u.values)))
    du = gradient(result.u).values
    sup_grad = float(np.max(np.sqrt(np.sum(du**2, axis=0))))
    return sup_u, sup_grad
