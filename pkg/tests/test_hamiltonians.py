import numpy as np
import pytest

from hjadj.hamiltonians import (HamiltonianModel, check_coercivity, check_h3,
                                convexity_h3_values, derivative_mismatch,
                                make_builtin)

BUILTINS = [
    ("quartic1d", {}),
    ("eikonal", {}),
    ("quadratic_potential", {"potential": [(1, 1.0)]}),
    ("quadratic_potential", {"potential": [((1, 0), 0.5), ((0, 1), 0.5)]}),
    ("linear_drift", {"b": (1.0,), "c": -1.0}),
    ("constant", {"value": -1.0}),
]


def _at(model, x, p):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return float(model.h(x, p)[0])


def test_quartic_value_at_zero():
    q = make_builtin("quartic1d")
    assert _at(q, [0.0], [0.0]) == -1.0
    # p^4 - 2 p^2 - 1 at a few points
    for p in (0.5, 1.0, 1.7):
        assert _at(q, [0.0], [p]) == pytest.approx(p**4 - 2 * p**2 - 1)


def test_eikonal_value_and_negativity_at_zero():
    e = make_builtin("eikonal")
    assert _at(e, [0.0], [0.0]) == -1.0
    assert _at(e, [0.0], [2.0]) == 3.0


def test_quadratic_potential_zero_v():
    m = make_builtin("quadratic_potential", potential=[])
    assert _at(m, [0.3], [2.0]) == 2.0
    assert not m.x_dependent


def test_unknown_builtin_rejected():
    with pytest.raises(ValueError):
        make_builtin("not_a_model")


@pytest.mark.parametrize("name,kwargs", BUILTINS)
def test_derivative_consistency(name, kwargs):
    model = make_builtin(name, **kwargs)
    dim = 2 if name == "quadratic_potential" and any(
        isinstance(f, tuple) for f, _ in kwargs.get("potential", [])) else 1
    if name == "linear_drift" and dim == 2:
        model = make_builtin(name, b=(1.0, 0.5), c=-1.0)
    assert derivative_mismatch(model, dim=dim, n_samples=1000) <= 1e-6


def test_check_h3_quartic_margin_exact():
    q = make_builtin("quartic1d")
    cert = check_h3(q, 2.0, 2.0, p_radius=3.0)
    # independent brute force of DH(p).p - 2 H(p) = 2 p^4 + 2 on the lattice
    ps = np.linspace(-3.0, 3.0, cert.samples_per_axis)
    brute = np.min((4 * ps**4 - 4 * ps**2) - 2 * (ps**4 - 2 * ps**2 - 1))
    assert cert.observed_min_margin == pytest.approx(brute, abs=1e-12)
    assert abs(cert.observed_min_margin - 2.0) <= 1e-9
    assert cert.passed


def test_check_h3_eikonal_convex_values():
    e = make_builtin("eikonal")
    gamma, delta = convexity_h3_values(e)
    assert (gamma, delta) == (1.0, 1.0)
    cert = check_h3(e, gamma, delta)
    # margin 2|p|^2 - (|p|^2 - 1) = |p|^2 + 1, minimum 1 at p = 0
    assert cert.observed_min_margin == pytest.approx(1.0, abs=1e-12)
    assert cert.passed


def test_check_h3_quartic_low_gamma():
    q = make_builtin("quartic1d")
    cert = check_h3(q, 1.0, 0.1, p_radius=3.0)
    # brute-force lattice minimum of 3p^4 - 2p^2 + 1
    ps = np.linspace(-3.0, 3.0, cert.samples_per_axis)
    brute = float(np.min(3 * ps**4 - 2 * ps**2 + 1))
    assert cert.observed_min_margin == pytest.approx(brute, abs=1e-12)
    assert cert.passed == (brute >= 0.1 - 1e-9)


def test_check_h3_rejects_x_dependent():
    m = make_builtin("quadratic_potential", potential=[(1, 1.0)])
    with pytest.raises(ValueError):
        check_h3(m, 1.0, 1.0)


def test_check_h3_certificate_threshold():
    e = make_builtin("eikonal")
    # min margin is exactly 1; delta slightly above fails, slightly below passes
    assert not check_h3(e, 1.0, 1.0 + 1e-6).passed
    assert check_h3(e, 1.0, 1.0 - 1e-6).passed


def test_coercivity_builtin_zoo():
    assert check_coercivity(make_builtin("quartic1d"), (1, 2, 4, 8))
    assert check_coercivity(make_builtin("eikonal"), (1, 2, 4, 8))
    assert not check_coercivity(make_builtin("linear_drift"), (1, 2, 4, 8))
    assert not check_coercivity(make_builtin("constant"), (1, 2, 4, 8))
    m2 = make_builtin("quadratic_potential", potential=[((1, 0), 0.5), ((0, 1), 0.5)])
    assert check_coercivity(m2, (1, 2, 4, 8), dim=2)


def test_convexity_values_reject_nonnegative_h0():
    m = make_builtin("quadratic_potential", potential=[])
    with pytest.raises(ValueError):
        convexity_h3_values(m)


def test_convexity_values_custom_model():
    # H(p) = |p|^2 - 4 -> (1, 4)
    def h(x, p):
        return np.sum(np.asarray(p, float) ** 2, axis=-1) - 4.0

    def gp(x, p):
        return 2.0 * np.asarray(p, float)

    m = HamiltonianModel("shifted", h, gp, lambda x, p: np.zeros_like(np.asarray(p, float)),
                         x_dependent=False, claims_convex_in_p=True)
    assert convexity_h3_values(m) == (1.0, 4.0)


@pytest.mark.parametrize("name,gamma,delta", [("quartic1d", 2.0, 2.0), ("eikonal", 1.0, 1.0)])
def test_margin_implies_scaling_monotonicity(name, gamma, delta):
    # t^{-gamma} H(t p) must increase along rays for any model with a margin
    model = make_builtin(name)
    assert check_h3(model, gamma, delta).passed
    rng = np.random.default_rng(7)
    ts = np.linspace(0.1, 2.0, 40)
    for _ in range(20):
        p = rng.uniform(-3.0, 3.0, size=(1,))
        vals = [t**-gamma * _at(model, [0.0], t * p) for t in ts]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_check_h3_two_dim_lattice():
    e = make_builtin("eikonal")
    cert = check_h3(e, 1.0, 1.0, p_radius=2.0, samples_per_axis=81, dim=2)
    assert cert.passed
    assert cert.observed_min_margin == pytest.approx(1.0, abs=1e-12)
