"""Adjoint solvers for the regularized equations.

Periodic problems get the fake-parabolic adjoint: an artificial time
variable is attached and

    -w*sigma_t - div(b sigma) = nu*Lap(sigma),   sigma(T) = delta_{x0}

is integrated backward from a terminal point mass (w is 2 for the
eps-scheme and 2*theta for the theta-scheme; b = D_pH at the computed
gradient).  Reversing time gives the forward conservation law
w*sigma_s = div(b sigma) + nu*Lap(sigma), discretized with implicit Euler,
a conservative upwind flux for the transport and centered diffusion.  The
step matrix has nonpositive off-diagonal entries and constant column sums,
so nonnegativity and unit mass hold structurally, never by clipping
(clipping would silently break the mass identity).

Dirichlet problems get the elliptic adjoint: the operator is the exact
transpose of the discrete dual-forward operator L v = DH(Du).Dv - nu*Lap(v)
(drift-upwinded, same stencils), so the duality identity
integral(f*sigma) = v(x0) holds to linear-solver round-off for every f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (Grid, ScalarField, Topology, VectorField, discrete_delta,
                   gradient, integrate, laplacian, shifted_flat_indices)
from .hamiltonians import HamiltonianModel

MASS_DRIFT_LIMIT = 1e-8


class SingularSystem(RuntimeError):
    """An adjoint or dual linear system could not be solved."""


class StabilityFailure(RuntimeError):
    """The implicit time stepping produced non-finite values."""


class MassDrift(RuntimeError):
    """Total adjoint mass left 1 by more than the allowed drift."""


@dataclass
class AdjointConfig:
    """Horizon, terminal source node and stepping for the parabolic adjoint.

    theta_weight is the coefficient on sigma_t: 2 for the eps-scheme, 2*theta
    for the theta-scheme.  time_steps=None picks
    max(64, ceil(8*T*sup|b|/h)); implicit Euler is unconditionally stable but
    the transport accuracy needs resolution.
    """

    x0: object
    T: float = 1.0
    time_steps: int | None = None
    theta_weight: float = 2.0

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.theta_weight <= 0:
            raise ValueError("theta_weight must be positive")
        if self.time_steps is not None and self.time_steps < 1:
            raise ValueError("time_steps must be >= 1")


@dataclass
class AdjointTrajectory:
    """sigma(., t_k) for t_k from T down to 0, with the mass at each time."""

    times: np.ndarray
    sigma: list
    mass_history: np.ndarray
    min_value: float


def _laplacian_matrix_periodic(grid: Grid) -> sp.csr_matrix:
    n = grid.node_count
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    idx = np.arange(n)
    for d in range(grid.dim):
        h2 = grid.spacing[d] ** 2
        diag -= 2.0 / h2
        for off in (+1, -1):
            nbr = shifted_flat_indices(grid, d, off).ravel()
            rows.append(idx)
            cols.append(nbr)
            vals.append(np.full(n, 1.0 / h2))
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def _advection_matrix_periodic(grid: Grid, velocity: np.ndarray) -> sp.csr_matrix:
    """Matrix of sigma -> -div(velocity * sigma) with face-averaged velocity
    and upwind donor values.  Each face flux enters two rows with opposite
    signs, so columns sum to zero and total mass is conserved exactly.

    ``velocity`` has shape (dim,) + grid.shape.
    """
    n = grid.node_count
    idx = np.arange(n)
    rows, cols, vals = [], [], []
    for d in range(grid.dim):
        h = grid.spacing[d]
        v = velocity[d].ravel()
        right = shifted_flat_indices(grid, d, +1).ravel()
        v_face = 0.5 * (v + v[right])
        donor = np.where(v_face >= 0.0, idx, right)
        c = v_face / h
        # row i loses the flux through its right face, row i+1 gains it
        rows.append(idx)
        cols.append(donor)
        vals.append(-c)
        rows.append(right)
        cols.append(donor)
        vals.append(c)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def default_time_steps(T: float, b_max: float, h_min: float) -> int:
    return max(64, int(math.ceil(8.0 * T * b_max / h_min)))


def solve_parabolic_adjoint(u: ScalarField, model: HamiltonianModel,
                            drift_scale: float, nu: float, cfg: AdjointConfig,
                            p_shift: np.ndarray | None = None) -> AdjointTrajectory:
    """Backward fake-parabolic adjoint on a periodic grid.

    The drift is drift_scale * D_pH(x, p_shift + Du) with Du the central
    gradient of the converged forward solution.  Raises StabilityFailure on
    non-finite iterates and MassDrift if any step's mass leaves 1 by more
    than 1e-8.
    """
    grid = u.grid
    if grid.topology is not Topology.PERIODIC:
        raise ValueError("the parabolic adjoint is posed on a periodic grid")
    if nu <= 0:
        raise ValueError("nu must be positive")
    du = gradient(u).as_points()
    if p_shift is not None:
        du = du + np.asarray(p_shift, dtype=float)
    b = drift_scale * np.moveaxis(model.grad_p(grid.coords, du), -1, 0)

    steps = cfg.time_steps
    if steps is None:
        steps = default_time_steps(cfg.T, float(np.max(np.abs(b))), min(grid.spacing))
    dt = cfg.T / steps

    # reversed time s = T - t: w*sigma_s = div(b sigma) + nu*Lap(sigma)
    A = _advection_matrix_periodic(grid, -b) + nu * _laplacian_matrix_periodic(grid)
    w = cfg.theta_weight
    M = (w * sp.identity(grid.node_count, format="csr") - dt * A).tocsc()
    try:
        lu = spla.splu(M)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc

    sigma = discrete_delta(grid, cfg.x0)
    fields = [sigma]
    times = [cfg.T]
    masses = [integrate(sigma)]
    min_value = float(np.min(sigma.values))
    vec = sigma.values.ravel().copy()
    for k in range(1, steps + 1):
        vec = lu.solve(w * vec)
        if not np.all(np.isfinite(vec)):
            raise StabilityFailure(f"non-finite adjoint at step {k}")
        f = ScalarField(grid, vec.reshape(grid.shape))
        mass = integrate(f)
        if abs(mass - 1.0) > MASS_DRIFT_LIMIT:
            raise MassDrift(f"mass {mass} at step {k}")
        fields.append(f)
        times.append(cfg.T - k * dt)
        masses.append(mass)
        min_value = min(min_value, float(np.min(vec)))
    return AdjointTrajectory(np.array(times), fields, np.array(masses), min_value)


def _dual_operator(u: ScalarField, model: HamiltonianModel, nu: float):
    """Interior-node matrix of L v = DH(Du).Dv - nu*Lap(v) on a Dirichlet
    box, drift-upwinded (backward difference where the drift component is
    >= 0), with boundary columns eliminated (v = 0 there).  Returns the
    matrix, the interior flat indices and the drift array used."""
    grid = u.grid
    if grid.topology is not Topology.DIRICHLET_BOX:
        raise ValueError("the dual problem is posed on a Dirichlet box")
    if nu <= 0:
        raise ValueError("nu must be positive")
    du = gradient(u).as_points()
    b = np.moveaxis(model.grad_p(grid.coords, du), -1, 0)

    n = grid.node_count
    interior = grid.interior_mask.ravel()
    int_idx = np.flatnonzero(interior)
    pos = np.full(n, -1, dtype=int)
    pos[int_idx] = np.arange(int_idx.size)

    rows, cols, vals = [], [], []
    diag = np.zeros(int_idx.size)
    for d in range(grid.dim):
        h = grid.spacing[d]
        bd = b[d].ravel()[int_idx]
        up = shifted_flat_indices(grid, d, +1).ravel()[int_idx]
        dn = shifted_flat_indices(grid, d, -1).ravel()[int_idx]
        # diffusion
        diag += 2.0 * nu / h**2
        for nbr in (up, dn):
            ok = pos[nbr] >= 0
            rows.append(np.arange(int_idx.size)[ok])
            cols.append(pos[nbr[ok]])
            vals.append(np.full(ok.sum(), -nu / h**2))
        # upwind transport: b>=0 backward (donor below), b<0 forward
        backward = bd >= 0.0
        diag += np.abs(bd) / h
        donor = np.where(backward, dn, up)
        ok = pos[donor] >= 0
        rows.append(np.arange(int_idx.size)[ok])
        cols.append(pos[donor[ok]])
        vals.append(-np.abs(bd[ok]) / h)
    rows.append(np.arange(int_idx.size))
    cols.append(np.arange(int_idx.size))
    vals.append(diag)
    F = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(int_idx.size, int_idx.size))
    return F, int_idx, b


def dual_drift(u: ScalarField, model: HamiltonianModel) -> VectorField:
    """The drift DH(Du) entering the dual problems, central gradient."""
    du = gradient(u).as_points()
    b = np.moveaxis(model.grad_p(u.grid.coords, du), -1, 0)
    return VectorField(u.grid, b)


def solve_dual_forward(u: ScalarField, model: HamiltonianModel, nu: float,
                       f: ScalarField) -> ScalarField:
    """Solve DH(Du).Dv = nu*Lap(v) + f with v = 0 on the boundary.  The
    upwind operator is an M-matrix, so v >= 0 whenever f >= 0."""
    F, int_idx, _ = _dual_operator(u, model, nu)
    rhs = f.values.ravel()[int_idx]
    try:
        v_int = spla.splu(F.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(v_int)):
        raise SingularSystem("dual forward solve produced non-finite values")
    out = np.zeros(u.grid.node_count)
    out[int_idx] = v_int
    return ScalarField(u.grid, out.reshape(u.grid.shape))


def solve_elliptic_adjoint(u: ScalarField, model: HamiltonianModel, nu: float,
                           x0) -> ScalarField:
    """Solve the transposed dual operator against a point mass at x0:
    -div(DH(Du) sigma) = nu*Lap(sigma) + delta_{x0}, sigma = 0 on the
    boundary, as the bit-for-bit transpose of the forward stencils."""
    grid = u.grid
    F, int_idx, _ = _dual_operator(u, model, nu)
    delta = discrete_delta(grid, x0)
    rhs = delta.values.ravel()[int_idx]
    try:
        s_int = spla.splu(F.T.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(s_int)):
        raise SingularSystem("adjoint solve produced non-finite values")
    out = np.zeros(grid.node_count)
    out[int_idx] = s_int
    return ScalarField(grid, out.reshape(grid.shape))


def boundary_flux(sigma: ScalarField, nu: float,
                  drift: VectorField | None = None) -> float:
    """Discrete outward boundary flux of an elliptic adjoint.

    Without a drift this is nu times the one-sided normal derivative summed
    over the boundary with surface weights, evaluated through the interior
    sum of nu*Lap(sigma) (the discrete divergence theorem; linear in nu).
    With the drift of the generating solve it adds the upwind transport
    surface terms, which makes the total equal -1 up to linear-solver
    round-off for a transpose-solved sigma.
    """
    grid = sigma.grid
    if grid.topology is not Topology.DIRICHLET_BOX:
        raise ValueError("boundary flux is defined on a Dirichlet box")
    lap = laplacian(sigma).values
    interior = grid.interior_mask
    vol = grid.cell_volume
    flux = nu * math.fsum((lap[interior] * vol).ravel().tolist())
    if drift is not None:
        s = sigma.values.ravel()
        boundary = grid.boundary_mask.ravel()
        int_idx = np.flatnonzero(~boundary)
        terms = []
        for d in range(grid.dim):
            h = grid.spacing[d]
            bd = drift.values[d].ravel()[int_idx]
            up = shifted_flat_indices(grid, d, +1).ravel()[int_idx]
            dn = shifted_flat_indices(grid, d, -1).ravel()[int_idx]
            donor = np.where(bd >= 0.0, dn, up)
            hits = boundary[donor]
            terms.extend((np.abs(bd[hits]) / h * s[int_idx[hits]] * vol).tolist())
        leak = math.fsum(terms)
        flux -= leak
    return flux


def duality_gap(u: ScalarField, model: HamiltonianModel, nu: float, x0,
                f: ScalarField) -> float:
    """|integral(f*sigma) - v(x0)| from the two dual solves; bounded by
    linear-solver round-off because the adjoint is the exact transpose."""
    grid = u.grid
    v = solve_dual_forward(u, model, nu, f)
    sigma = solve_elliptic_adjoint(u, model, nu, x0)
    prod = ScalarField(grid, sigma.values * f.values)
    idx = grid.interior_index(x0)
    return abs(integrate(prod) - float(v.values[idx]))
