import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from thermistor_lab.discretization import (
    Grid,
    GridField,
    difference_operators,
    face_gradients,
    flux,
    integrate,
    lp_norm,
    p_laplacian_apply,
    p_laplacian_jacobian,
    w1p_seminorm,
)
from thermistor_lab.errors import ConfigError
from thermistor_lab.problem import DomainSpec

finite = st.floats(-1.0, 1.0, allow_nan=False)


def grid1(n, L=1.0):
    return Grid.uniform(DomainSpec.interval(L), n)


def grid2(n, m=None, Lx=1.0, Ly=1.0):
    return Grid(2, (n, m or n), (Lx, Ly))


def classical_laplacian(u, h):
    pad = np.pad(u, 1)
    if u.ndim == 1:
        return (pad[2:] - 2 * pad[1:-1] + pad[:-2]) / h[0] ** 2
    return ((pad[2:, 1:-1] - 2 * pad[1:-1, 1:-1] + pad[:-2, 1:-1]) / h[0] ** 2
            + (pad[1:-1, 2:] - 2 * pad[1:-1, 1:-1] + pad[1:-1, :-2]) / h[1] ** 2)


def test_grid_geometry():
    g = grid1(3)
    assert g.spacing == (0.25,)
    np.testing.assert_allclose(g.axes[0], [0.25, 0.5, 0.75])
    assert g.measure == pytest.approx(0.75)
    g2 = Grid(2, (3, 4), (1.0, 2.0))
    assert g2.shape == (3, 4) and g2.size == 12
    assert g2.coordinates[0].shape == (3, 4)
    with pytest.raises(ConfigError):
        Grid(1, (0,), (1.0,))
    with pytest.raises(ConfigError):
        GridField(g, np.zeros(4))
    with pytest.raises(ConfigError):
        GridField(g, [0, np.nan, 0])


@pytest.mark.parametrize("n", [1, 2, 7, 50])
def test_quadratic_is_differentiated_exactly(n):
    g = grid1(n)
    x = g.axes[0]
    out = p_laplacian_apply(GridField(g, x * (1 - x)), 2)
    np.testing.assert_allclose(out.values, -2.0, rtol=1e-10)


@pytest.mark.parametrize("p", [2, 2.5, 3, 4, 7])
@pytest.mark.parametrize("a", [0.3, -1.7])
def test_single_node_formula(p, a):
    g = grid1(1)
    h = 0.5
    out = p_laplacian_apply(GridField(g, [a]), p).values[0]
    phi = lambda s: abs(s / h) ** (p - 2) * (s / h)  # noqa: E731
    expected = (phi(0 - a) - phi(a - 0)) / h
    assert out == pytest.approx(expected, rel=1e-14)
    assert out == pytest.approx(-2 * abs(a / h) ** (p - 2) * a / h**2, rel=1e-14)
    assert np.sign(out) == -np.sign(a)


def test_zero_field_maps_to_zero():
    for g in (grid1(5), grid2(4)):
        assert not np.any(p_laplacian_apply(GridField.zeros(g), 3.0).values)


def test_p_laplacian_rejects_p_below_two():
    with pytest.raises(ConfigError):
        p_laplacian_apply(GridField.zeros(grid1(3)), 1.5)


@pytest.mark.parametrize("dim", [1, 2])
def test_p2_matches_classical_stencil(dim):
    rng = np.random.default_rng(dim)
    for _ in range(10):
        g = grid1(int(rng.integers(3, 40)), rng.uniform(0.5, 3)) if dim == 1 else \
            Grid(2, tuple(int(k) for k in rng.integers(3, 20, 2)), tuple(rng.uniform(0.5, 3, 2)))
        u = rng.uniform(-1, 1, g.shape)
        ours = p_laplacian_apply(GridField(g, u), 2).values
        ref = classical_laplacian(u, g.spacing)
        assert np.max(np.abs(ours - ref)) <= 1e-13 * np.max(np.abs(ref))


def test_integrate_examples():
    for n in (1, 4, 99):
        g = grid1(n)
        assert integrate(np.ones(n), g) == pytest.approx(n / (n + 1))
    assert integrate(np.zeros(5), grid1(5)) == 0
    g2 = grid2(3)
    assert integrate(np.full((3, 3), 2.0), g2) == pytest.approx(2 * 9 / 16)


def test_lp_norm_examples():
    g = grid1(1)
    assert lp_norm(GridField(g, [3.0]), 2) == pytest.approx(math.sqrt(4.5))
    assert lp_norm(GridField(grid1(3), [1, -5, 2]), math.inf) == 5
    g = grid1(9)
    c = -1.3
    for k in (1, 2, 3.5):
        assert lp_norm(GridField(g, np.full(9, c)), k) == pytest.approx(abs(c) * g.measure ** (1 / k))
    assert lp_norm(GridField(g, np.full(9, c)), math.inf) == abs(c)
    with pytest.raises(ConfigError):
        lp_norm(GridField(g, np.ones(9)), 0.5)


@given(arrays(float, 12, elements=finite), st.floats(1, 12))
def test_lp_norm_bounded_by_max_norm(u, k):
    g = grid1(12)
    f = GridField(g, u)
    assert lp_norm(f, k) <= g.measure ** (1 / k) * lp_norm(f, math.inf) * (1 + 1e-12) + 1e-300


def test_w1p_examples():
    assert w1p_seminorm(GridField.zeros(grid1(4)), 3) == 0
    g = grid1(1)
    a = 0.7
    assert w1p_seminorm(GridField(g, [a]), 2) == pytest.approx(2 * a)
    for p in (2.5, 4):
        assert w1p_seminorm(GridField(g, [a]), p) == pytest.approx((0.5 * 2 * abs(2 * a) ** p) ** (1 / p))


@given(arrays(float, 9, elements=finite), st.floats(2, 6), st.floats(0.01, 100))
def test_w1p_is_positively_homogeneous(u, p, c):
    g = grid1(9)
    a = w1p_seminorm(GridField(g, u), p)
    b = w1p_seminorm(GridField(g, c * u), p)
    assert b == pytest.approx(c * a, rel=1e-12, abs=1e-300)


@given(arrays(float, (5, 6), elements=finite), st.sampled_from([2.0, 2.5, 3.0, 4.0]))
def test_energy_identity_2d(u, p):
    g = Grid(2, (5, 6), (1.0, 1.5))
    lhs = -np.sum(p_laplacian_apply(GridField(g, u), p).values * u) * g.cell_volume
    rhs = w1p_seminorm(GridField(g, u), p) ** p
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-280)


@given(arrays(float, 11, elements=finite), arrays(float, 11, elements=finite), st.floats(2, 6))
def test_monotonicity(u, v, p):
    g = grid1(11)
    au = p_laplacian_apply(GridField(g, u), p).values
    av = p_laplacian_apply(GridField(g, v), p).values
    assert np.sum((au - av) * (u - v)) * g.cell_volume <= 1e-12 * (1 + np.sum(np.abs(au - av)))


@given(arrays(float, (4, 5), elements=finite), st.floats(2, 5))
def test_odd_symmetry(u, p):
    g = grid2(4, 5)
    a = p_laplacian_apply(GridField(g, u), p).values
    b = p_laplacian_apply(GridField(g, -u), p).values
    assert np.array_equal(a, -b)


def test_difference_operators_match_face_gradients():
    rng = np.random.default_rng(0)
    g = Grid(2, (6, 5), (1.0, 2.0))
    u = rng.normal(size=g.shape)
    for d, fg in zip(difference_operators(g), face_gradients(u, g.spacing)):
        np.testing.assert_allclose(d @ u.reshape(-1), fg.reshape(-1), atol=1e-12)


@pytest.mark.parametrize("p,eps", [(2, 0), (3, 0), (4, 0.1), (2.5, 1e-3)])
def test_jacobian_against_finite_differences(p, eps):
    rng = np.random.default_rng(1)
    g = grid1(12)
    u = rng.uniform(-1, 1, 12)
    jac = p_laplacian_jacobian(u, g, p, eps).toarray()
    from thermistor_lab.discretization import apply_p_laplacian
    step = 1e-6
    num = np.column_stack([(apply_p_laplacian(u + step * e, g.spacing, p, eps)
                            - apply_p_laplacian(u - step * e, g.spacing, p, eps)) / (2 * step)
                           for e in np.eye(12)])
    assert np.max(np.abs(jac - num)) <= 1e-5 * np.max(np.abs(jac))
    np.testing.assert_allclose(jac, jac.T, atol=1e-12)


def test_regularised_flux_tends_to_plain_flux():
    g = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(flux(g, 3, 1e-9), flux(g, 3), atol=1e-8)
