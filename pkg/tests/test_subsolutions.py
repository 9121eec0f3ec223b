import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjselect.errors import ConfigError, DomainOverflow, EmptyInterval
from hjselect.grid import GridFunction, TorusGrid, slopes
from hjselect.models import TriangularBump, ZeroPotential, double_well, flat_quasiconvex
from hjselect.subsolutions import (admissible_slopes, analytic_flat_limit, explicit_w,
                                   flat_discounted_construction, flat_limit_profile, maximal_subsolution,
                                   slope_bounds, subsolution_dictionary, viscosity_residuals)

FLAT0 = flat_quasiconvex(ZeroPotential())
FLAT = flat_quasiconvex(TriangularBump(0.1))


def test_admissible_slopes_flat_level_one():
    iv = admissible_slopes(FLAT0, 0.5, 1.0)
    assert iv.lo == pytest.approx(-3.5, abs=1e-10) and iv.hi == pytest.approx(0.5, abs=1e-10)
    assert iv.connected


def test_admissible_slopes_grow_with_potential():
    iv = admissible_slopes(FLAT, 0.1, 1.0)
    assert iv.hi == pytest.approx(0.6, abs=1e-10) and iv.lo == pytest.approx(-3.6, abs=1e-10)


def test_double_well_low_level_is_disconnected():
    iv = admissible_slopes(double_well(0.0), 0.0, 0.5)
    assert not iv.connected and len(iv.components) == 2
    with pytest.raises(Exception):
        slope_bounds(double_well(0.0), TorusGrid(8), 0.5)


def test_level_below_minimum():
    with pytest.raises(EmptyInterval):
        admissible_slopes(double_well(0.0), 0.0, -0.1)


def test_maximal_subsolution_oracle_zero_potential():
    g = TorusGrid(1024)
    S = maximal_subsolution(FLAT0, 1.0, 0.0, g).S
    # rises at 1/2 until the backward path at slope -7/2 is lower: cut at x = 7/8
    assert S[g.node_index(0.5)] == pytest.approx(0.25, abs=1e-12)
    assert S[g.node_index(7 / 8)] == pytest.approx(0.4375, abs=1e-12)
    assert S[0] == 0.0


@pytest.mark.parametrize("y", [0.0, 0.3, 0.55, 0.8])
def test_maximal_subsolution_is_sub_but_not_super_at_vertex(y):
    g = TorusGrid(1024)
    ms = maximal_subsolution(FLAT, 1.0, y, g)
    sub, sup = viscosity_residuals(ms.S, FLAT, 1.0)
    assert np.max(sub) <= 2 * g.spacing
    assert sup[g.node_index(y)] >= 0.9
    dm, dp = slopes(ms.S.values, g.spacing)
    assert dm[g.node_index(y)] <= -3.5 + 2 * g.spacing and dp[g.node_index(y)] >= 0.5 - 2 * g.spacing


def test_residuals_for_smooth_solution():
    g = TorusGrid(64)
    u = GridFunction(g, np.zeros(64))
    sub, sup = viscosity_residuals(u, FLAT0, 1.0)
    # F(3/2) = 1: the zero function solves the level-one problem
    np.testing.assert_allclose(sub, 0.0, atol=1e-12)
    np.testing.assert_allclose(sup, 0.0, atol=1e-12)


def test_convex_corner_makes_sub_test_vacuous():
    g = TorusGrid(16)
    u = GridFunction(g, np.abs(g.nodes - 0.5))
    sub, sup = viscosity_residuals(u, FLAT0, 1.0)
    i = g.node_index(0.5)
    assert sub[i] == -np.inf and np.isfinite(sup[i])


def test_explicit_w_shape_and_subsolution():
    g = TorusGrid(800)
    w = explicit_w(0.3, g)
    assert w[g.node_index(0.3)] == 0.0
    assert w[g.node_index(0.3 + 7 / 8)] == pytest.approx(7 / 16)
    sub, _ = viscosity_residuals(w, FLAT, 1.0)
    assert np.max(sub) <= 1e-12


def test_flat_limit_closed_form():
    s = 0.1
    assert flat_limit_profile(s, 2 * s) == pytest.approx(s + s * s)
    assert flat_limit_profile(s, 4 * s + 2 * s * s) == pytest.approx(0.0, abs=1e-15)
    assert flat_limit_profile(s, 0.7) == 0.0
    u0, b = analytic_flat_limit(s, TorusGrid(100))
    assert b == pytest.approx(0.42)
    sub, sup = viscosity_residuals(u0, FLAT, 1.0)
    assert np.max(sub) <= 0.01 + 1e-12 and np.max(sup) <= 0.01 + 1e-12


def test_flat_limit_parameter_checks():
    with pytest.raises(ConfigError):
        analytic_flat_limit(0.3, TorusGrid(16))
    with pytest.raises(ConfigError):
        flat_discounted_construction(0.1, 0.0, TorusGrid(16))


@settings(max_examples=8, deadline=None)
@given(st.floats(min_value=0.02, max_value=0.2))
def test_limit_profile_continuous_and_periodic(s):
    x = np.linspace(0.0, 1.0, 20001)
    u = flat_limit_profile(s, x)
    assert np.max(np.abs(np.diff(u))) < 1e-3
    assert u[0] == pytest.approx(u[-1])


def test_discounted_construction_approaches_limit():
    g = TorusGrid(512)
    con = flat_discounted_construction(0.1, 1e-3, g)
    u0, b = analytic_flat_limit(0.1, g)
    assert 0.1 < con.a < 0.2 and abs(con.b - b) < 0.01
    assert np.max(np.abs(con.v.values - u0.values)) < 1e-3


def test_dictionary_contents():
    names = [n for n, _ in subsolution_dictionary(TorusGrid(64))]
    assert "u0" in names and "w_y=0.3" in names and len(names) == 10


def test_domain_overflow_guard():
    # b = 4s + 2s^2 exceeds 1 for s = 0.24
    with pytest.raises(DomainOverflow):
        analytic_flat_limit(0.24, TorusGrid(16))
