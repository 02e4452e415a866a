"""Hamiltonian models H(x, p) with analytic derivatives, plus checkers for
the structural conditions the solvers and estimates rely on:

* H(0) < 0 (needed for the homogeneous Dirichlet problems),
* coercivity, H(p)/|p| -> infinity,
* the homogeneity-type margin DH(p).p - gamma*H(p) >= delta > 0, a weaker
  substitute for convexity of H in p.

Evaluator convention: ``x`` and ``p`` are arrays of shape ``(..., dim)``;
``h`` returns shape ``(...,)`` and the two gradients return ``(..., dim)``.
Models are immutable and their evaluators pure, so they are thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class HamiltonianModel:
    name: str
    h: Callable
    grad_p: Callable
    grad_x: Callable
    x_dependent: bool
    claims_convex_in_p: bool


@dataclass(frozen=True)
class H3Certificate:
    """Result of sampling the margin DH(p).p - gamma*H(p) on a box.

    The certificate is only as strong as its sample box; coercive models have
    margins that grow at infinity, so a bounded box is the honest check.
    """

    gamma: float
    delta: float
    p_radius: float
    samples_per_axis: int
    observed_min_margin: float
    passed: bool


_PASS_TOL = 1e-9  # slack below delta for rounding on polynomial margins


def _sq_norm(p):
    return np.sum(np.asarray(p, dtype=float) ** 2, axis=-1)


def _zeros_like_vec(p):
    return np.zeros_like(np.asarray(p, dtype=float))


def _make_quartic():
    # (|p|^2 - 1)^2 - 2; non-convex, coercive, margin 2|p|^4 + 2 for gamma=2
    def h(x, p):
        return (_sq_norm(p) - 1.0) ** 2 - 2.0

    def grad_p(x, p):
        p = np.asarray(p, dtype=float)
        return 4.0 * (_sq_norm(p) - 1.0)[..., None] * p

    return HamiltonianModel("quartic1d", h, grad_p, lambda x, p: _zeros_like_vec(p),
                            x_dependent=False, claims_convex_in_p=False)


def _make_eikonal():
    def h(x, p):
        return _sq_norm(p) - 1.0

    def grad_p(x, p):
        return 2.0 * np.asarray(p, dtype=float)

    return HamiltonianModel("eikonal", h, grad_p, lambda x, p: _zeros_like_vec(p),
                            x_dependent=False, claims_convex_in_p=True)


def _normalize_potential(potential, ):
    terms = []
    for freq, amp in potential:
        freq_vec = np.atleast_1d(np.asarray(freq, dtype=float))
        terms.append((freq_vec, float(amp)))
    return terms


def _make_quadratic_potential(potential: Sequence = ()):
    """|p|^2/2 + V(x) with V a truncated Fourier cosine series given as
    (frequency, amplitude) pairs; frequency is a scalar in 1D or a tuple of
    per-axis integer frequencies, for a potential of period 1."""
    terms = _normalize_potential(potential)

    def v(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for freq, amp in terms:
            out = out + amp * np.cos(2.0 * np.pi * np.sum(freq * x, axis=-1))
        return out

    def h(x, p):
        return 0.5 * _sq_norm(p) + v(x)

    def grad_p(x, p):
        return np.asarray(p, dtype=float).copy()

    def grad_x(x, p):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for freq, amp in terms:
            phase = 2.0 * np.pi * np.sum(freq * x, axis=-1)
            out = out - (2.0 * np.pi * amp) * np.sin(phase)[..., None] * freq
        return out

    return HamiltonianModel("quadratic_potential", h, grad_p, grad_x,
                            x_dependent=bool(terms), claims_convex_in_p=True)


def _make_linear_drift(b=(1.0,), c=-1.0):
    b_vec = np.atleast_1d(np.asarray(b, dtype=float))
    c = float(c)

    def h(x, p):
        return np.sum(b_vec * np.asarray(p, dtype=float), axis=-1) + c

    def grad_p(x, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(b_vec, p.shape).copy()

    return HamiltonianModel("linear_drift", h, grad_p, lambda x, p: _zeros_like_vec(p),
                            x_dependent=False, claims_convex_in_p=True)


def _make_constant(value=-1.0):
    value = float(value)

    def h(x, p):
        return np.full(np.asarray(p, dtype=float).shape[:-1], value)

    return HamiltonianModel("constant", h,
                            lambda x, p: _zeros_like_vec(p),
                            lambda x, p: _zeros_like_vec(p),
                            x_dependent=False, claims_convex_in_p=True)


def make_builtin(name: str, **kwargs) -> HamiltonianModel:
    """Build one of the built-in models by name.

    quartic1d            (|p|^2-1)^2 - 2, the non-convex margin example
    eikonal              |p|^2 - 1
    quadratic_potential  |p|^2/2 + V(x), kwargs: potential=[(freq, amp), ...]
    linear_drift         b.p + c, kwargs: b, c
    constant             H == value (degenerate, DH == 0), kwargs: value
    """
    factories = {
        "quartic1d": _make_quartic,
        "eikonal": _make_eikonal,
        "quadratic_potential": _make_quadratic_potential,
        "linear_drift": _make_linear_drift,
        "constant": _make_constant,
    }
    if name not in factories:
        raise ValueError(f"unknown builtin model {name!r}")
    return factories[name](**kwargs)


def _p_lattice(p_radius: float, samples_per_axis: int, dim: int) -> np.ndarray:
    axes = [np.linspace(-p_radius, p_radius, samples_per_axis)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def check_h3(model: HamiltonianModel, gamma: float, delta: float,
             p_radius: float = 3.0, samples_per_axis: int = 241,
             dim: int = 1) -> H3Certificate:
    """Sample m(p) = DH(p).p - gamma*H(p) on a dense lattice in the box
    |p_i| <= p_radius and record the minimum.  x-dependent models are
    rejected; the condition is stated for H = H(p)."""
    if model.x_dependent:
        raise ValueError("check_h3 requires an x-independent model")
    if gamma <= 0 or delta <= 0:
        raise ValueError("gamma and delta must be positive")
    pts = _p_lattice(p_radius, samples_per_axis, dim)
    x = np.zeros_like(pts)
    margin = np.sum(model.grad_p(x, pts) * pts, axis=-1) - gamma * model.h(x, pts)
    min_margin = float(np.min(margin))
    return H3Certificate(gamma, delta, p_radius, samples_per_axis, min_margin,
                         passed=min_margin >= delta - _PASS_TOL)


def _sphere_directions(dim: int, n: int) -> np.ndarray:
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    ang = 2.0 * np.pi * np.arange(n) / n
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def check_coercivity(model: HamiltonianModel, radii: Sequence[float],
                     dim: int = 1, n_directions: int = 64,
                     n_x_samples: int = 16, threshold: float = 1.0) -> bool:
    """True iff g(r) = min_{x, |p|=r} H(x,p)/r is strictly increasing along
    the given radii and exceeds ``threshold`` at the largest one.  For
    x-dependent models x ranges over a lattice in the unit cell."""
    radii = [float(r) for r in radii]
    if len(radii) < 2 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be an increasing list of length >= 2")
    dirs = _sphere_directions(dim, n_directions)
    if model.x_dependent:
        axes = [np.linspace(0.0, 1.0, n_x_samples, endpoint=False)] * dim
        xs = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    else:
        xs = np.zeros((1, dim))
    x_all = np.repeat(xs, dirs.shape[0], axis=0)
    p_dirs = np.tile(dirs, (xs.shape[0], 1))
    g = []
    for r in radii:
        g.append(float(np.min(model.h(x_all, r * p_dirs))) / r)
    increasing = all(b > a for a, b in zip(g, g[1:]))
    return increasing and g[-1] > threshold


def convexity_h3_values(model: HamiltonianModel) -> tuple[float, float]:
    """Canonical margin parameters (gamma, delta) = (1, -H(0)) for a model
    convex in p; the caller still runs check_h3 with them."""
    if not model.claims_convex_in_p:
        raise ValueError("model does not claim convexity in p")
    if model.x_dependent:
        raise ValueError("canonical values need an x-independent model")
    p0 = np.zeros((1, 1))
    h0 = float(model.h(np.zeros((1, 1)), p0)[0])
    if h0 >= 0:
        raise ValueError(f"H(0) = {h0} must be negative")
    return 1.0, -h0


def derivative_mismatch(model: HamiltonianModel, dim: int = 1,
                        n_samples: int = 1000, step: float = 1e-5,
                        seed: int = 0) -> float:
    """Max scaled mismatch between the analytic gradients and centered finite
    differences of H over random (x, p) samples."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, size=(n_samples, dim))
    p = rng.uniform(-3.0, 3.0, size=(n_samples, dim))
    worst = 0.0
    for which, analytic in (("p", model.grad_p(x, p)), ("x", model.grad_x(x, p))):
        for d in range(dim):
            e = np.zeros(dim)
            e[d] = step
            if which == "p":
                fd = (model.h(x, p + e) - model.h(x, p - e)) / (2.0 * step)
            else:
                fd = (model.h(x + e, p) - model.h(x - e, p)) / (2.0 * step)
            err = np.abs(analytic[:, d] - fd) / np.maximum(1.0, np.abs(analytic[:, d]))
            worst = max(worst, float(np.max(err)))
    return worst
