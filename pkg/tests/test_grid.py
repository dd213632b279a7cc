import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearlab.errors import ConfigurationError
from shearlab.grid import (Boundary, DomainKind, build_grid, derivative, h1_seminorm,
                           inner_product, l2_norm, stiffness_and_mass)


def _all_grids():
    return [
        build_grid("torus", 64),
        build_grid("truncated_line", 256, half_width=10),
        build_grid("channel", 65),
        build_grid("channel", 33, scheme="chebyshev"),
    ]


def test_torus_points():
    g = build_grid("torus", 64)
    np.testing.assert_array_equal(g.points, -np.pi + 2 * np.pi * np.arange(64) / 64)
    assert g.boundary is Boundary.PERIODIC


def test_chebyshev_endpoints_exact():
    g = build_grid(DomainKind.CHANNEL, 33, scheme="chebyshev")
    assert g.points[0] == -1.0 and g.points[-1] == 1.0
    assert g.boundary is Boundary.DIRICHLET


@pytest.mark.parametrize("grid", _all_grids(), ids=lambda g: f"{g.kind.value}-{g.scheme}")
def test_quadrature_of_one_is_length(grid):
    assert abs(grid.quadrature_weights.sum() / grid.length - 1) < 1e-12
    assert np.all(np.diff(grid.points) > 0)


def test_truncated_line_length():
    g = build_grid("truncated_line", 256, half_width=10)
    assert abs(g.quadrature_weights.sum() - 20) < 1e-12 * 20


@pytest.mark.parametrize("kw", [
    dict(kind="torus", n=8),
    dict(kind="truncated_line", n=64),
    dict(kind="truncated_line", n=64, half_width=3),
    dict(kind="channel", n=64, half_width=5),
    dict(kind="channel", n=64, scheme="sine"),
    dict(kind="moebius", n=64),
])
def test_build_grid_rejects_bad_input(kw):
    with pytest.raises(ConfigurationError):
        build_grid(**kw)


def test_torus_second_derivative_of_sine():
    g = build_grid("torus", 32)
    d2 = derivative(g, np.sin(g.points), 2)
    assert np.max(np.abs(d2 + np.sin(g.points))) < 1e-10


def test_torus_first_derivative_of_exponential():
    g = build_grid("torus", 64)
    f = np.exp(1j * g.points)
    assert np.max(np.abs(derivative(g, f, 1) - 1j * f)) < 1e-10


@pytest.mark.parametrize("grid", _all_grids(), ids=lambda g: f"{g.kind.value}-{g.scheme}")
def test_derivative_of_zero(grid):
    z = np.zeros(grid.n, dtype=complex)
    for order in (1, 2):
        assert np.all(derivative(grid, z, order) == 0)


def test_derivative_order_validated():
    g = build_grid("torus", 32)
    with pytest.raises(ConfigurationError):
        derivative(g, np.zeros(32), 3)


@pytest.mark.parametrize("n,tol", [(129, 2e-4), (33, 1e-9)])
def test_channel_second_derivative_of_dirichlet_mode(n, tol):
    # cos(pi y/2) vanishes at both walls
    scheme = "fd" if n == 129 else "chebyshev"
    g = build_grid("channel", n, scheme=scheme)
    f = g.sample(lambda y: np.cos(np.pi * y / 2))
    d2 = derivative(g, f, 2)
    exact = -(np.pi / 2) ** 2 * np.cos(np.pi * g.points / 2)
    assert np.max(np.abs(d2[1:-1] - exact[1:-1])) < tol


def test_fd_second_derivative_converges_at_second_order():
    errs = []
    for n in (65, 129, 257):
        g = build_grid("channel", n)
        f = g.sample(lambda y: np.cos(np.pi * y / 2))
        d2 = derivative(g, f, 2)
        exact = -(np.pi / 2) ** 2 * np.cos(np.pi * g.points / 2)
        errs.append(np.max(np.abs(d2 - exact)[1:-1]))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_sine_series_derivatives_spectrally_accurate():
    g = build_grid("truncated_line", 512, half_width=10)
    y = g.points
    f = g.sample(lambda y: np.exp(-y**2 + 2j * y))
    d1 = (-2 * y + 2j) * np.exp(-y**2 + 2j * y)
    d2 = ((-2 * y + 2j) ** 2 - 2) * np.exp(-y**2 + 2j * y)
    assert np.max(np.abs(derivative(g, f, 1) - d1)) < 1e-8
    assert np.max(np.abs(derivative(g, f, 2) - d2)[1:-1]) < 1e-7


def test_inner_product_examples():
    g = build_grid("torus", 64)
    e = np.exp(1j * g.points)
    assert abs(inner_product(g, e, e) - 2 * np.pi) < 1e-12
    assert abs(inner_product(g, np.sin(g.points), np.cos(g.points))) < 1e-12
    assert abs(l2_norm(g, e) - np.sqrt(2 * np.pi)) < 1e-12
    assert l2_norm(g, np.zeros(64)) == 0 and h1_seminorm(g, np.zeros(64)) == 0


@pytest.mark.parametrize("n,scheme", [(257, "fd"), (33, "chebyshev")])
def test_channel_mode_norm(n, scheme):
    g = build_grid("channel", n, scheme=scheme)
    f = g.sample(lambda y: np.cos(np.pi * y / 2))
    # cos^2 = (1 + cos(pi y))/2: trapezoid is exact, Clenshaw-Curtis spectrally close
    assert abs(inner_product(g, f, f).real - 1) < 1e-12


@pytest.mark.parametrize("n,scheme,tol", [(257, "fd", 1e-4), (33, "chebyshev", 1e-10)])
def test_channel_rayleigh_quotient(n, scheme, tol):
    g = build_grid("channel", n, scheme=scheme)
    f = g.sample(lambda y: np.cos(np.pi * y / 2))
    q = h1_seminorm(g, f) ** 2 / l2_norm(g, f) ** 2
    assert abs(q / (np.pi / 2) ** 2 - 1) < tol


def test_torus_parseval():
    rng = np.random.default_rng(1)
    g = build_grid("torus", 128)
    f = rng.standard_normal(128) + 1j * rng.standard_normal(128)
    c = np.fft.fft(f) / g.n
    assert abs(2 * np.pi * np.sum(np.abs(c) ** 2) / l2_norm(g, f) ** 2 - 1) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_inner_product_conjugate_symmetric_and_norm(seed):
    rng = np.random.default_rng(seed)
    for g in _all_grids():
        f = rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n)
        h = rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n)
        assert inner_product(g, f, h) == np.conj(inner_product(g, h, f))
        assert abs(l2_norm(g, f) ** 2 / inner_product(g, f, f).real - 1) < 1e-14


@pytest.mark.parametrize("grid", [build_grid("torus", 64),
                                  build_grid("truncated_line", 256, half_width=10),
                                  build_grid("channel", 65, scheme="chebyshev")],
                         ids=["torus", "line", "cheb"])
def test_discrete_integration_by_parts(grid):
    y = grid.points
    if grid.kind is DomainKind.TORUS:
        f, h = np.exp(2j * y) + np.cos(y), np.sin(3 * y) + 0.5j
    elif grid.kind is DomainKind.TRUNCATED_LINE:
        f = grid.sample(lambda y: np.exp(-y**2 + 1j * y))
        h = grid.sample(lambda y: np.exp(-(y - 1) ** 2))
    else:
        f = grid.sample(lambda y: (1 - y**2) * np.exp(1j * y))
        h = grid.sample(lambda y: np.sin(np.pi * (y + 1)))
    lhs = inner_product(grid, derivative(grid, f, 1), h) + inner_product(grid, f, derivative(grid, h, 1))
    assert abs(lhs) <= 1e-8 * l2_norm(grid, f) * l2_norm(grid, h)


@pytest.mark.parametrize("grid", _all_grids(), ids=lambda g: f"{g.kind.value}-{g.scheme}")
def test_stiffness_and_mass_reproduce_norms(grid):
    rng = np.random.default_rng(3)
    K, M, idx = stiffness_and_mass(grid)
    f = np.zeros(grid.n, dtype=complex)
    f[idx] = rng.standard_normal(idx.size) + 1j * rng.standard_normal(idx.size)
    u = f[idx]
    assert np.isclose((u.conj() @ K @ u).real, h1_seminorm(grid, f) ** 2, rtol=1e-10)
    assert np.isclose((u.conj() @ M @ u).real, l2_norm(grid, f) ** 2, rtol=1e-12)


def test_grid_is_immutable():
    g = build_grid("torus", 32)
    with pytest.raises(ValueError):
        g.points[0] = 1.0


def test_dirichlet_conform_rejects_nonzero_ends():
    g = build_grid("channel", 33)
    with pytest.raises(ConfigurationError):
        g.conform(np.ones(33))
    with pytest.raises(ConfigurationError):
        g.conform(np.zeros(10))
