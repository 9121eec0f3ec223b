import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjselect.errors import ConfigError
from hjselect.grid import GridFunction, TorusGrid, max_norm_distance, one_sided_gradients, resample, slopes


def test_nodes_and_spacing():
    g = TorusGrid(8)
    assert g.spacing == 0.125
    np.testing.assert_allclose(g.nodes, np.arange(8) / 8)


@pytest.mark.parametrize("n", [0, 7, 8.5])
def test_rejects_small_or_fractional_grids(n):
    with pytest.raises(ConfigError):
        TorusGrid(n)


def test_node_index_wraps():
    g = TorusGrid(16)
    assert g.node_index(0.0) == 0
    assert g.node_index(1.0) == 0
    assert g.node_index(-1 / 16) == 15
    assert g.node_index(0.999) == 0


def test_grid_function_is_read_only():
    g = TorusGrid(8)
    u = GridFunction(g, np.arange(8.0))
    with pytest.raises(ValueError):
        u.values[0] = 1.0
    assert u[-1] == 7.0 and u[8] == 0.0


def test_grid_function_validates_size_and_finiteness():
    g = TorusGrid(8)
    with pytest.raises(ConfigError):
        GridFunction(g, np.zeros(7))
    with pytest.raises(ConfigError):
        GridFunction(g, np.full(8, np.nan))


def test_arithmetic():
    g = TorusGrid(8)
    u = g.constant(2.0)
    w = (u + 1.0) * 3 - u
    np.testing.assert_allclose(w.values, 7.0)
    assert (2 * u).max_abs() == 4.0


def test_slopes_of_periodic_linear_pieces():
    g = TorusGrid(16)
    u = np.sin(2 * np.pi * g.nodes)
    dm, dp = slopes(u, g.spacing)
    np.testing.assert_allclose(np.roll(dp, 1), dm)
    a, b = one_sided_gradients(GridFunction(g, u), 0)
    assert a == pytest.approx(dm[0]) and b == pytest.approx(dp[0])


def test_resample_is_identity_on_same_grid_and_exact_for_nested_grids():
    g, f = TorusGrid(16), TorusGrid(32)
    u = GridFunction(g, np.cos(2 * np.pi * g.nodes))
    assert resample(u, g) is u
    back = resample(resample(u, f), g)
    assert max_norm_distance(back, u) < 1e-15


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=8, max_value=64), st.integers(min_value=-200, max_value=200))
def test_periodic_indexing(n, i):
    g = TorusGrid(n)
    u = GridFunction(g, np.arange(n, dtype=float))
    assert u[i] == u[i + n] == u[i - 3 * n]
