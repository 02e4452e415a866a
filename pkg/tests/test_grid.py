import math

import numpy as np
import pytest

from hjadj.grid import (ScalarField, Topology, VectorField, build_grid,
                        discrete_delta, divergence_conservative, gradient,
                        integrate, laplacian, save_csv)


def test_build_grid_periodic_spacing():
    g = build_grid(1, 8, 1.0, "periodic")
    assert g.spacing == (0.125,)
    assert g.node_count == 8
    assert g.is_periodic


def test_build_grid_dirichlet_boundary_count():
    g = build_grid(2, (16, 16), (1.0, 1.0), "dirichlet_box")
    # perimeter of a 16x16 lattice: 4*16 - 4 corners
    assert g.boundary_indices.size == 60
    assert g.spacing == (1.0 / 15, 1.0 / 15)


@pytest.mark.parametrize("counts,lengths", [(2, 1.0), (3, -1.0), ((3, 2), (1.0, 1.0))])
def test_build_grid_rejects_bad_input(counts, lengths):
    dim = 2 if isinstance(counts, tuple) else 1
    with pytest.raises(ValueError):
        build_grid(dim, counts, lengths, "periodic")


def test_gradient_constant_is_zero():
    g = build_grid(1, 32, 1.0, "periodic")
    f = ScalarField.full(g, 3.7)
    assert np.max(np.abs(gradient(f).values)) == 0.0


def test_gradient_exact_on_affine_dirichlet():
    g = build_grid(1, 17, 1.0, "dirichlet_box")
    f = ScalarField.from_function(g, lambda x: 2.5 * x - 0.3)
    assert np.max(np.abs(gradient(f).values[0] - 2.5)) < 1e-13


def test_gradient_second_order_on_smooth_periodic():
    # refine h -> h/2; max-error ratio must sit at the second-order value
    errs = []
    for n in (64, 128):
        g = build_grid(1, n, 1.0, "periodic")
        f = ScalarField.from_function(g, lambda x: np.sin(2 * np.pi * x))
        exact = 2 * np.pi * np.cos(2 * np.pi * g.axis_coords(0))
        errs.append(np.max(np.abs(gradient(f).values[0] - exact)))
    ratio = errs[0] / errs[1]
    assert 2.0**1.8 < ratio < 2.0**2.2


def test_gradient_second_order_on_dirichlet_box():
    errs = []
    for n in (65, 129):
        g = build_grid(1, n, 1.0, "dirichlet_box")
        f = ScalarField.from_function(g, lambda x: np.sin(2 * np.pi * x) + x**2)
        exact = 2 * np.pi * np.cos(2 * np.pi * g.axis_coords(0)) + 2 * g.axis_coords(0)
        errs.append(np.max(np.abs(gradient(f).values[0] - exact)))
    ratio = errs[0] / errs[1]
    assert ratio > 2.0**1.8


def test_upwind_gradient_picks_direction():
    g = build_grid(1, 64, 1.0, "periodic")
    f = ScalarField.from_function(g, lambda x: x * x)
    h = g.spacing[0]
    x = g.axis_coords(0)
    plus = VectorField(g, np.ones((1,) + g.shape))
    minus = VectorField(g, -np.ones((1,) + g.shape))
    gp = gradient(f, scheme="upwind", drift=plus).values[0]
    gm = gradient(f, scheme="upwind", drift=minus).values[0]
    # backward difference of x^2 is 2x - h, forward is 2x + h (seam aside)
    assert np.allclose(gp[1:-1], 2 * x[1:-1] - h, atol=1e-12)
    assert np.allclose(gm[1:-1], 2 * x[1:-1] + h, atol=1e-12)


def test_upwind_gradient_requires_drift():
    g = build_grid(1, 8, 1.0, "periodic")
    with pytest.raises(ValueError):
        gradient(ScalarField.zeros(g), scheme="upwind")


def test_laplacian_exact_on_quadratic():
    g = build_grid(1, 33, 1.0, "dirichlet_box")
    f = ScalarField.from_function(g, lambda x: x * x)
    lap = laplacian(f).values
    assert np.max(np.abs(lap[1:-1] - 2.0)) < 1e-11
    assert lap[0] == 0.0 and lap[-1] == 0.0


def test_laplacian_constant_zero():
    g = build_grid(2, (8, 8), (1.0, 1.0), "periodic")
    assert np.max(np.abs(laplacian(ScalarField.full(g, 4.0)).values)) < 1e-13


def test_laplacian_second_order_on_sine():
    errs = []
    for n in (64, 128):
        g = build_grid(1, n, 1.0, "periodic")
        f = ScalarField.from_function(g, lambda x: np.sin(2 * np.pi * x))
        exact = -(2 * np.pi) ** 2 * np.sin(2 * np.pi * g.axis_coords(0))
        errs.append(np.max(np.abs(laplacian(f).values - exact)))
    assert errs[0] / errs[1] > 2.0**1.8


def test_divergence_constant_field_zero():
    g = build_grid(1, 32, 1.0, "periodic")
    F = VectorField(g, np.full((1, 32), 2.2))
    assert np.max(np.abs(divergence_conservative(F).values)) == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_divergence_integral_vanishes_periodic(seed):
    rng = np.random.default_rng(seed)
    g = build_grid(2, (16, 24), (1.0, 2.0), "periodic")
    F = VectorField(g, rng.standard_normal((2,) + g.shape))
    total = integrate(divergence_conservative(F))
    eps = np.finfo(float).eps
    assert abs(total) <= 10 * eps * np.sum(np.abs(F.values))


def test_divergence_affine_dirichlet_interior():
    g = build_grid(1, 33, 1.0, "dirichlet_box")
    F = VectorField(g, g.axis_coords(0)[None, :].copy())
    div = divergence_conservative(F).values
    assert np.allclose(div[1:-1], 1.0, atol=1e-12)


def test_integrate_unit_on_both_topologies():
    for topo in ("periodic", "dirichlet_box"):
        g = build_grid(1, 9, 1.0, topo)
        assert integrate(ScalarField.full(g, 1.0)) == pytest.approx(1.0, abs=1e-14)
        assert integrate(ScalarField.zeros(g)) == 0.0


def test_discrete_delta_unit_mass_and_peak():
    g = build_grid(1, 8, 1.0, "periodic")
    d = discrete_delta(g, 3)
    assert d.values[3] == 8.0
    assert integrate(d) == 1.0  # dyadic spacing, exact
    g2 = build_grid(2, (16, 16), (1.0, 1.0), "dirichlet_box")
    d2 = discrete_delta(g2, (5, 7))
    assert integrate(d2) == pytest.approx(1.0, abs=1e-13)


def test_discrete_delta_rejects_boundary_node():
    g = build_grid(1, 9, 1.0, "dirichlet_box")
    with pytest.raises(ValueError):
        discrete_delta(g, 0)


def test_field_validation():
    g = build_grid(1, 8, 1.0, "periodic")
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(7))
    bad = np.zeros(8)
    bad[2] = np.nan
    with pytest.raises(ValueError):
        ScalarField(g, bad)


def test_scalar_field_csv_roundtrip_format(tmp_path):
    g = build_grid(1, 4, 1.0, "dirichlet_box")
    f = ScalarField(g, np.array([0.0, 0.25, 1.0 / 3.0, 1.0]))
    path = tmp_path / "field.csv"
    save_csv(f, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "x,value"
    assert len(lines) == 5
    x, v = lines[2].split(",")
    assert float(x) == pytest.approx(1.0 / 3.0)
    assert float(v) == 0.25
    # 17 significant digits survive a round trip
    assert float(lines[3].split(",")[1]) == 1.0 / 3.0


def test_csv_two_dim_header(tmp_path):
    g = build_grid(2, (3, 3), (1.0, 1.0), "dirichlet_box")
    path = tmp_path / "f.csv"
    save_csv(ScalarField.zeros(g), path)
    assert path.read_text().startswith("x,y,value\n")
