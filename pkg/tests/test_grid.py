import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfline_hjb.grid import Grid2D, GridFunction, fd_derivative_x, sup_norm, weighted_norm, weighted_sup_norm


def test_grid_nodes_hit_endpoints():
    g = Grid2D(3.0, 7, 2.0, 5)
    assert g.x[0] == 0.0 and g.x[-1] == 3.0
    assert g.t[0] == 0.0 and g.t[-1] == 2.0
    assert g.shape == (8, 6)


@pytest.mark.parametrize("args", [(0.0, 5, 1.0, 5), (1.0, 1, 1.0, 5), (1.0, 5, -1.0, 5), (1.0, 5, 1.0, 0), (np.inf, 5, 1.0, 5)])
def test_grid_rejects_bad_sizes(args):
    with pytest.raises(ValueError):
        Grid2D(*args)


def test_derivative_of_zero_and_linear():
    g = Grid2D(2.0, 13, 1.0, 4)
    assert np.all(fd_derivative_x(GridFunction.zeros(g)).values == 0)
    d = fd_derivative_x(GridFunction.from_function(g, lambda x, t: x + 0 * t))
    np.testing.assert_allclose(d.values, 1.0, atol=1e-12)


def test_derivative_exact_for_quadratics():
    g = Grid2D(1.0, 10, 1.0, 3)
    d = fd_derivative_x(GridFunction.from_function(g, lambda x, t: x**2 + 0 * t))
    assert d.values[5, 0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(d.values[:, 1], 2 * g.x, atol=1e-12)


def test_norm_examples():
    g = Grid2D(1.0, 10, 1.0, 10)
    assert weighted_norm(GridFunction.zeros(g), 3.0) == 0.0
    assert weighted_norm(GridFunction.from_function(g, lambda x, t: 1 + 0 * x), 0.0) == pytest.approx(1.0)
    assert weighted_norm(GridFunction.from_function(g, lambda x, t: x + 0 * t), 0.0) == pytest.approx(2.0)
    assert sup_norm(GridFunction.from_function(g, lambda x, t: -3 + 0 * x)) == 3.0
    g2 = Grid2D(2.0, 10, 1.0, 10)
    assert sup_norm(GridFunction.from_function(g2, lambda x, t: x + 0 * t)) == 2.0


def test_weighted_norm_weights_terminal_time_fully():
    g = Grid2D(1.0, 4, 1.0, 4)
    v = np.zeros(g.shape)
    v[2, -1] = 1.0
    assert weighted_sup_norm(GridFunction(g, v), 50.0) == 1.0
    v2 = np.zeros(g.shape)
    v2[2, 0] = 1.0
    assert weighted_sup_norm(GridFunction(g, v2), 2.0) == pytest.approx(np.exp(-2.0))


def test_values_are_read_only():
    u = GridFunction.zeros(Grid2D(1.0, 4, 1.0, 4))
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        GridFunction(Grid2D(1.0, 4, 1.0, 4), np.zeros((3, 3)))


def test_csv_round_trip_and_format(tmp_path):
    g = Grid2D(1.0, 3, 0.5, 2)
    u = GridFunction.from_function(g, lambda x, t: np.sin(x) * np.exp(t) / 3.0)
    text = u.to_csv(tmp_path / "u.csv")
    assert text.startswith("x,t,u\n")
    assert "\r" not in text
    assert text == (tmp_path / "u.csv").read_text()
    back = GridFunction.from_csv(str(tmp_path / "u.csv"))
    assert back.grid.n_x == 3 and back.grid.n_t == 2
    np.testing.assert_allclose(back.values, u.values, rtol=1e-11)
    first = text.splitlines()[2].split(",")
    assert first[2] == f"{u.values[1, 0]:.12g}"


def test_interpolate_reproduces_nodes_and_bilinear():
    g = Grid2D(2.0, 4, 1.0, 4)
    u = GridFunction.from_function(g, lambda x, t: 2 * x + 3 * t)
    assert u.interpolate(0.5, 0.25) == pytest.approx(1.75)
    assert u.interpolate(0.3, 0.6) == pytest.approx(2.4)


grids = st.builds(
    Grid2D,
    st.floats(0.5, 5.0),
    st.integers(3, 12),
    st.floats(0.1, 3.0),
    st.integers(1, 8),
)


@settings(max_examples=60, deadline=None)
@given(grids, st.integers(0, 2**31 - 1), st.floats(0.0, 20.0), st.floats(-5.0, 5.0))
def test_norm_properties(g, seed, kappa, scale):
    rng = np.random.default_rng(seed)
    u = GridFunction(g, rng.normal(size=g.shape))
    v = GridFunction(g, rng.normal(size=g.shape))
    nu, nv = weighted_norm(u, kappa), weighted_norm(v, kappa)
    assert nu >= 0
    assert weighted_norm(u + v, kappa) <= nu + nv + 1e-12
    assert weighted_norm(u * scale, kappa) == pytest.approx(abs(scale) * nu, rel=1e-12, abs=1e-300)
    # larger decay never increases the norm
    assert weighted_norm(u, kappa + 1.0) <= nu + 1e-15
    assert weighted_sup_norm(u, 0.0) == pytest.approx(sup_norm(u))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 50.0), st.integers(2, 500), st.floats(0.01, 50.0), st.integers(1, 500))
def test_grid_endpoints_are_exact(x_max, n_x, T, n_t):
    g = Grid2D(x_max, n_x, T, n_t)
    assert g.x[0] == 0.0 and g.x[-1] == x_max
    assert g.t[0] == 0.0 and g.t[-1] == T
    assert np.all(np.diff(g.x) > 0) and np.all(np.diff(g.t) > 0)
