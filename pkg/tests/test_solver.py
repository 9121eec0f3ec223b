import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjselect.errors import ConfigError, InvalidSigma, MonotonicityViolation
from hjselect.grid import TorusGrid, max_norm_distance
from hjselect.models import (CallableDiscount, LinearDiscount, TriangularBump, ZeroPotential, double_well,
                             flat_quasiconvex, smooth_quasiconvex)
from hjselect.solver import (SolverConfig, godunov_flux, lax_friedrichs_flux, numerical_hamiltonian,
                             residual_field, solve_discounted, solve_generalized)

G64 = TorusGrid(64)


def test_config_validation():
    for kw in ({"scheme": "upwind"}, {"method": "bfgs"}, {"damping": 0.0}, {"tol": -1.0},
               {"eta": -1.0}, {"sigma": 0.0}, {"coarse_start": -1}):
        with pytest.raises(ConfigError):
            SolverConfig(**kw)


def test_numerical_hamiltonian_consistency():
    H = double_well(0.5)
    assert numerical_hamiltonian(H, 0.1, 0.3, 0.3, 2.0) == pytest.approx(H(0.1, 0.3))


def test_godunov_flux_min_and_max():
    G = lambda x, q: q * q
    dG = lambda x, q: 2 * q
    val, da, db = godunov_flux(G, dG, 0.0, np.array([-1.0]), np.array([2.0]), critical=(0.0,))
    assert val[0] == 0.0 and da[0] == 0.0 and db[0] == 0.0
    val, da, db = godunov_flux(G, dG, 0.0, np.array([2.0]), np.array([-1.0]), critical=(0.0,))
    assert val[0] == 4.0 and da[0] == 4.0 and db[0] == 0.0


def test_lax_friedrichs_flux_monotone_for_large_sigma():
    _, da, db = lax_friedrichs_flux(lambda x, q: q ** 2, lambda x, q: 2 * q, 0.0, 0.4, 0.6, 3.0)
    assert da >= 0.0 >= db


def test_constant_solution_for_zero_potential():
    H = double_well(1.5, ZeroPotential())
    res = solve_discounted(H, 0.1, G64)
    np.testing.assert_allclose(res.u.values, -(1.5 ** 2 - 1) ** 2 / 0.1, rtol=1e-12)
    assert res.converged and res.lipschitz < 1e-10


@pytest.mark.parametrize("scheme", ["godunov", "lax_friedrichs"])
@pytest.mark.parametrize("method", ["newton", "fixed_point"])
def test_solvers_reach_small_residual(scheme, method):
    H = smooth_quasiconvex(V=TriangularBump(0.1), P=0.3)
    cfg = SolverConfig(scheme=scheme, method=method, tol=1e-9)
    res = solve_discounted(H, 0.5, G64, cfg)
    assert res.converged
    assert residual_field(res.u, H, 0.5, cfg).max_abs() < 1e-8


def test_schemes_agree_to_first_order():
    H = smooth_quasiconvex(V=TriangularBump(0.1), P=0.3)
    errs = []
    # LF carries numerical viscosity ~ sigma h, so its pre-asymptotic range is long
    for n in (512, 2048):
        g = TorusGrid(n)
        a = solve_discounted(H, 0.5, g).u
        b = solve_discounted(H, 0.5, g, SolverConfig(scheme="lax_friedrichs")).u
        errs.append(max_norm_distance(a, b))
    assert errs[1] < 0.6 * errs[0]


def test_grid_continuation_matches_direct_solve():
    H = flat_quasiconvex(TriangularBump(0.1))
    g = TorusGrid(512)
    a = solve_discounted(H, 1e-2, g, shift=1.0)
    b = solve_discounted(H, 1e-2, g, SolverConfig(coarse_start=0), shift=1.0)
    assert max_norm_distance(a.normalized(1.0), b.normalized(1.0)) < 1e-9


def test_normalized_avoids_cancellation():
    H = flat_quasiconvex(TriangularBump(0.1))
    res = solve_discounted(H, 1e-6, G64, shift=1.0)
    v = res.normalized(1.0)
    assert v.max_abs() < 0.2


def test_warm_start_from_result_and_grid_function():
    H = double_well(0.5, TriangularBump(0.25, 0.5))
    g = TorusGrid(512)
    a = solve_discounted(H, 1e-1, g)
    b = solve_discounted(H, 5e-2, g, initial=a)
    c = solve_discounted(H, 5e-2, g, initial=a.u)
    assert max_norm_distance(b.u, c.u) < 1e-8


def test_generalized_linear_pair_matches_discounted():
    H = double_well(0.5, TriangularBump(0.25, 0.5))
    a = solve_discounted(H, 0.1, G64, shift=0.4)
    b = solve_generalized(LinearDiscount(H, 0.4), 0.1, G64)
    assert max_norm_distance(a.normalized(0.4), b.u) < 1e-10


def test_decreasing_discount_rejected():
    gd = CallableDiscount(lambda x, r: -r, lambda x, r: -np.ones_like(np.asarray(r, float)),
                          lambda x, q: q * q)
    with pytest.raises(MonotonicityViolation):
        solve_generalized(gd, 0.1, G64, initial=np.linspace(0.0, 1.0, 64))


def test_small_sigma_rejected():
    H = smooth_quasiconvex(V=TriangularBump(0.1), P=1.0)
    with pytest.raises(InvalidSigma):
        solve_discounted(H, 0.5, G64, SolverConfig(scheme="lax_friedrichs", sigma=1e-3, max_iter=50),
                         raise_on_failure=False)


def test_viscous_solve_residual():
    gd = LinearDiscount(flat_quasiconvex(TriangularBump(0.1)), 1.0)
    res = solve_generalized(gd, 1e-2, G64, SolverConfig(eta=0.05))
    assert res.converged and res.residual < 1e-8


@settings(max_examples=12, deadline=None)
@given(st.floats(min_value=-1.0, max_value=1.0), st.floats(min_value=0.0, max_value=2.0),
       st.floats(min_value=0.05, max_value=1.0))
def test_comparison_principle(c1, dc, eps):
    H = double_well(0.7, TriangularBump(0.25, 0.5))
    # with_offset(c) is H - c: a smaller Hamiltonian gives a larger solution
    big_H = solve_discounted(H.with_offset(c1), eps, TorusGrid(32)).u
    small_H = solve_discounted(H.with_offset(c1 + dc), eps, TorusGrid(32)).u
    assert np.all(small_H.values >= big_H.values - 1e-9)


@settings(max_examples=12, deadline=None)
@given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=0.05, max_value=1.0))
def test_shift_covariance(c, eps):
    H = flat_quasiconvex(TriangularBump(0.1))
    a = solve_discounted(H, eps, TorusGrid(32)).u
    b = solve_discounted(H.with_offset(c), eps, TorusGrid(32)).u
    assert max_norm_distance(b, a + c / eps) < 1e-8 * (1.0 + 1.0 / eps)


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=31), st.floats(min_value=0.1, max_value=1.0))
def test_translation_covariance_for_zero_potential_shifted_data(k, eps):
    # a constant potential gives a constant solution regardless of the node labels
    H = flat_quasiconvex(ZeroPotential(), P=0.2)
    u = solve_discounted(H, eps, TorusGrid(32)).u
    assert np.ptp(u.values) < 1e-10
    assert u[k] == pytest.approx(-H(0.0, 0.0) / eps)
