"""Acceptance claims as reproducible numerical checks.

Each ``claim_*`` function runs one study with fixed parameters and returns
a :class:`ClaimResult` with the measured values, the tolerances they are
held to, and a pass flag.  Expensive shared artifacts (the Mather ladders
on the fine grid) are cached in a :class:`ClaimContext`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .adjoint import (adjoint_step, approximate_mather, check_identity_i, check_identity_ii, duality_defect,
                      lower_bound_slack, weighted_pairing)
from .errors import NotASubsolution
from .ergodic import (double_well_case, double_well_case_transform, estimate_ergodic_constant,
                      exp_transform, gradient_inclusion_check, selection_constraint_check,
                      vanishing_discount_limit)
from .grid import GridFunction, TorusGrid, max_norm_distance, slopes
from .models import (LinearDiscount, TriangularBump, ZeroPotential, double_well, flat_quasiconvex,
                     smooth_quasiconvex)
from .solver import solve_discounted, solve_generalized
from .subsolutions import (analytic_flat_limit, explicit_w, flat_discounted_construction,
                           maximal_subsolution, subsolution_dictionary,
                           viscosity_residuals)

FLAT_S = 0.1
FLAT_HBAR = 1.0
DW_BUMP = dict(s=0.25, height=0.5)
COARSE_N = 1024
MATHER_N = 16384
MATHER_EPS = (1e-1, 1e-2, 1e-3, 1e-4)
MATHER_ANCHORS = (0.0, 0.3, 0.6)
FLAT_ANCHOR = 0.5
VERTICES = (0.0, 0.3, 0.55, 0.8)
HALVING_LADDER = tuple(0.1 * 2.0 ** -k for k in range(8))
IDENTITY_LEVELS = ((1e-2, 1e-2, 512), (5e-3, 5e-3, 1024))
SMOOTH_SUITE = (((0.0, 0.0, 0.5, 0.0, 0.25), 0.0), ((0.0, 0.0, 0.5, 0.0, 0.25), 0.7),
                ((0.0, 0.0, 1.0), 0.0), ((0.0, 0.0, 1.0), 0.7))


@dataclass
class ClaimResult:
    cid: int
    name: str
    passed: bool
    measured: dict
    tolerance: dict
    detail: str = ""
    runtime: float = field(default=0.0, compare=False)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{status}] criterion {self.cid:2d} {self.name}: {vals}"

    def as_dict(self) -> dict:
        return {"id": self.cid, "name": self.name, "passed": self.passed,
                "measured": _jsonable(self.measured), "tolerance": _jsonable(self.tolerance),
                "detail": self.detail}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _jsonable(d):
    if isinstance(d, dict):
        return {str(k): _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in d]
    if isinstance(d, (np.floating, float)):
        return float(f"{float(d):.12g}")
    if isinstance(d, np.integer):
        return int(d)
    if isinstance(d, np.bool_):
        return bool(d)
    return d


def flat_model():
    return flat_quasiconvex(TriangularBump(FLAT_S), P=1.5)


def dw_potential():
    return TriangularBump(**DW_BUMP)


class ClaimContext:
    """Lazily computed artifacts shared between claims."""

    def __init__(self, mather_n: int = MATHER_N):
        self.mather_n = mather_n

    @cached_property
    def fine_grid(self) -> TorusGrid:
        return TorusGrid(self.mather_n)

    @cached_property
    def flat_gd(self) -> LinearDiscount:
        return LinearDiscount(flat_model(), FLAT_HBAR)

    @cached_property
    def mather(self) -> dict:
        """Approximate Mather measures of the flat example, keyed by anchor."""
        g = self.fine_grid
        out = {}
        for x0 in MATHER_ANCHORS + (FLAT_ANCHOR,):
            out[x0] = approximate_mather(self.flat_gd, g.node_index(x0), MATHER_EPS, g)
        return out

    @cached_property
    def fine_limit(self):
        return vanishing_discount_limit(flat_model(), FLAT_HBAR, self.fine_grid, MATHER_EPS, check=False)

    @cached_property
    def case_b_hbar(self) -> dict:
        out = {}
        for _, _, n in IDENTITY_LEVELS:
            est = estimate_ergodic_constant(double_well(1.5, dw_potential()), TorusGrid(n),
                                            (1e-1, 1e-2, 1e-3, 1e-4))
            out[n] = est.hbar
        return out

    @cached_property
    def identity_runs(self) -> dict:
        """Residuals of the two measure identities at the two refinement levels."""
        out = {}
        for label in ("flat", "double_well_b"):
            rows = []
            for eps, eta, n in IDENTITY_LEVELS:
                g = TorusGrid(n)
                if label == "flat":
                    gd = self.flat_gd
                else:
                    gd = double_well_case_transform(1.5, self.case_b_hbar[n], dw_potential())
                step = adjoint_step(gd, eps, eta, g.node_index(FLAT_ANCHOR), g)
                phi = GridFunction(g, np.sin(2 * np.pi * g.nodes))
                rows.append((check_identity_i(step.measure, gd),
                             check_identity_ii(step.measure, gd, phi), step))
            out[label] = rows
        return out


# --------------------------------------------------------------------------
# claims
# --------------------------------------------------------------------------


def claim_flat_hbar(ctx: ClaimContext) -> ClaimResult:
    t = time.perf_counter()
    est = estimate_ergodic_constant(flat_model(), TorusGrid(COARSE_N), (1e-1, 1e-2, 1e-3))
    dt = time.perf_counter() - t
    err = abs(est.hbar - 1.0)
    return ClaimResult(1, "flat effective constant", err <= 0.02 and dt < 30.0,
                       {"hbar": est.hbar, "error": err, "seconds": round(dt, 1)},
                       {"error": 0.02, "seconds": 30.0})


def _zero_crossing(v: GridFunction, after: float, level: float) -> float:
    x, vals, h = v.grid.nodes, v.values, v.grid.spacing
    idx = np.nonzero((x > after) & (vals <= level))[0]
    if idx.size == 0:
        return float("nan")
    k = int(idx[0])
    a, b = vals[k - 1] - level, vals[k] - level
    return float(x[k - 1] + h * a / (a - b))


def claim_flat_limit(ctx: ClaimContext) -> ClaimResult:
    g = TorusGrid(COARSE_N)
    study = vanishing_discount_limit(flat_model(), FLAT_HBAR, g, (1e-1, 1e-2, 1e-3), check=False)
    u0, b = analytic_flat_limit(FLAT_S, g)
    dist = max_norm_distance(study.u0, u0)
    b_num = _zero_crossing(study.u0, 2 * FLAT_S, 1e-10)
    b_eps = flat_discounted_construction(FLAT_S, 1e-3, g).b
    ok = dist <= 0.05 and abs(b_num - 0.42) <= 0.01 and abs(b_eps - 0.42) <= 0.01
    return ClaimResult(2, "flat vanishing-discount limit", ok,
                       {"distance": dist, "b_numeric": b_num, "b_construction": b_eps, "b_closed_form": b},
                       {"distance": 0.05, "b": 0.01})


def claim_trivial_double_well(ctx: ClaimContext) -> ClaimResult:
    g = TorusGrid(COARSE_N)
    hb_err, v_err = 0.0, 0.0
    for P in (0.0, 0.5, 1.0, 1.5, 2.0):
        H = double_well(P, ZeroPotential())
        exact = (P * P - 1.0) ** 2
        est = estimate_ergodic_constant(H, g, (1e-1, 1e-2, 1e-3))
        hb_err = max(hb_err, abs(est.hbar - exact))
        study = vanishing_discount_limit(H, exact, g, (1e-1, 1e-2, 1e-3))
        v_err = max(v_err, max(v.max_abs() for v in study.v_eps))
    return ClaimResult(3, "trivial double-well family", hb_err <= 1e-6 and v_err <= 1e-8,
                       {"hbar_error": hb_err, "v_max": v_err}, {"hbar_error": 1e-6, "v_max": 1e-8})


def claim_gradient_inclusions(ctx: ClaimContext) -> ClaimResult:
    g = TorusGrid(COARSE_N)
    h = g.spacing
    measured, ok = {}, True
    for P, expected in ((0.5, "a"), (1.5, "b")):
        H = double_well(P, dw_potential())
        est = estimate_ergodic_constant(H, g, (1e-1, 1e-2, 1e-3, 1e-4))
        case = double_well_case(P, est.hbar, 10.0 * est.extrapolation_gap)
        res = solve_discounted(H, 1e-2, g, shift=est.hbar)
        margin = gradient_inclusion_check(res.u, P, est.hbar, expected)
        measured[f"margin_{expected}"] = margin
        measured[f"case_{expected}"] = case
        ok &= case == expected and margin >= -2 * h
    return ClaimResult(4, "double-well gradient inclusions", ok, measured, {"margin": -2 * h})


def claim_adjoint_exactness(ctx: ClaimContext) -> ClaimResult:
    steps = [s for m in ctx.mather.values() for s in m.steps]
    steps += [row[2] for rows in ctx.identity_runs.values() for row in rows]
    norm_err, min_theta, dual = 0.0, np.inf, 0.0
    for s in steps:
        norm_err = max(norm_err, abs(s.normalization - 1.0))
        min_theta = min(min_theta, s.min_theta)
        g = s.measure.grid
        probe = np.cos(2 * np.pi * g.nodes) + 0.5 * np.sin(6 * np.pi * g.nodes)
        dual = max(dual, duality_defect(s.adjoint.operator, s.adjoint.theta.values, probe))
    ok = min_theta >= 0.0 and norm_err <= 1e-8 and dual <= 1e-12
    return ClaimResult(5, "adjoint positivity and normalization", ok,
                       {"solves": len(steps), "min_theta": min_theta, "normalization_error": norm_err,
                        "duality_defect": dual},
                       {"min_theta": 0.0, "normalization_error": 1e-8, "duality_defect": 1e-12})


def identity_table(ctx: ClaimContext) -> dict:
    return {label: [[float(r1), float(r2)] for r1, r2, _ in rows] for label, rows in ctx.identity_runs.items()}


def claim_identities(ctx: ClaimContext) -> ClaimResult:
    table = identity_table(ctx)
    measured, ok = {}, True
    for label, ((i0, ii0), (i1, ii1)) in table.items():
        ri = i0 / i1 if i1 > 0 else np.inf
        rii = ii0 / ii1 if ii1 > 0 else np.inf
        measured[f"{label}_ratio_i"] = ri
        measured[f"{label}_ratio_ii"] = rii
        ok &= ri >= 1.5 and rii >= 1.5
    return ClaimResult(6, "measure identities under refinement", ok, measured, {"ratio": 1.5},
                       detail=f"residuals {table}")


def claim_measure_bounds(ctx: ClaimContext) -> ClaimResult:
    m = ctx.mather[FLAT_ANCHOR]
    gd = ctx.flat_gd
    v = m.finest.solve.u
    pairing = weighted_pairing(m.measure, gd, v)
    slack = min(lower_bound_slack(m.measure, gd, v, explicit_w(y, v.grid), m.x0) for y in VERTICES)
    ok = pairing <= 0.05 and slack >= -0.05
    return ClaimResult(7, "discounted measure bounds", ok,
                       {"pairing": pairing, "min_slack": slack, "anchor": FLAT_ANCHOR},
                       {"pairing": 0.05, "slack": -0.05})


def claim_exp_transform(ctx: ClaimContext) -> ClaimResult:
    g = TorusGrid(COARSE_N)
    worst = 0.0
    for coeffs, P in SMOOTH_SUITE:
        H = smooth_quasiconvex(coeffs, TriangularBump(FLAT_S), P)
        gd = exp_transform(H, grid=g)
        for eps in (1e-1, 1e-2):
            direct = solve_discounted(H, eps, g)
            transformed = solve_generalized(gd, eps, g)
            worst = max(worst, max_norm_distance(direct.u, transformed.u))
    return ClaimResult(8, "exponential transform equivalence", worst <= 5 * g.spacing,
                       {"max_distance": worst, "cases": 2 * len(SMOOTH_SUITE)}, {"max_distance": 5 * g.spacing})


def claim_vertex_not_solution(ctx: ClaimContext) -> ClaimResult:
    g = TorusGrid(COARSE_N)
    h = g.spacing
    H = flat_model()
    worst_sub, min_super, worst_cont = -np.inf, np.inf, 0.0
    for y in VERTICES:
        ms = maximal_subsolution(H, 1.0, y, g)
        sub, sup = viscosity_residuals(ms.S, H, 1.0)
        iy = g.node_index(y)
        worst_sub = max(worst_sub, float(np.max(sub)))
        min_super = min(min_super, float(sup[iy]))
        dm, dp = slopes(ms.S.values, h)
        worst_cont = max(worst_cont, dm[iy] - (-3.5), 0.5 - dp[iy])
    ok = worst_sub <= 2 * h and min_super >= 0.9 and worst_cont <= 2 * h
    return ClaimResult(9, "maximal subsolutions fail at the vertex", ok,
                       {"max_sub_residual": worst_sub, "min_super_violation": min_super,
                        "containment_defect": worst_cont},
                       {"sub_residual": 2 * h, "super_violation": 0.9, "containment": 2 * h})


def claim_sandwich(ctx: ClaimContext) -> ClaimResult:
    gd = ctx.flat_gd
    u0 = ctx.fine_limit.u0
    measures = [ctx.mather[x0].measure for x0 in MATHER_ANCHORS]
    u0_ok = selection_constraint_check(u0, measures, gd, 5e-2)
    u0_pairing = max(weighted_pairing(mu, gd, u0) for mu in measures)
    included, worst = [], -np.inf
    for name, w in subsolution_dictionary(u0.grid, FLAT_S):
        try:
            if not selection_constraint_check(w, measures, gd, 5e-2):
                continue
        except NotASubsolution:
            continue
        included.append(name)
        worst = max(worst, float(np.max(w.values - u0.values)))
    ok = u0_ok and worst <= 5e-2
    return ClaimResult(10, "selected limit dominates constrained subsolutions", ok,
                       {"u0_pairing": u0_pairing, "max_excess": worst, "included": len(included)},
                       {"pairing": 5e-2, "excess": 5e-2}, detail="included: " + ", ".join(included))


def claim_cauchy(ctx: ClaimContext) -> ClaimResult:
    g = TorusGrid(COARSE_N)
    measured, ok = {}, True
    models = {"flat": (flat_model(), FLAT_HBAR),
              "double_well_a": (double_well(0.5, dw_potential()), None),
              "double_well_b": (double_well(1.5, dw_potential()), None)}
    for label, (H, hbar) in models.items():
        if hbar is None:
            hbar = estimate_ergodic_constant(H, g, (1e-1, 1e-2, 1e-3, 1e-4)).hbar
        study = vanishing_discount_limit(H, hbar, g, HALVING_LADDER, check=False)
        measured[f"{label}_last_gap"] = float(study.cauchy_gaps[-1])
        measured[f"{label}_decreasing"] = study.gaps_decreasing(3)
        ok &= study.gaps_decreasing(3)
    return ClaimResult(11, "Cauchy convergence of the discounted family", ok, measured, {"monotone_over": 3})


CLAIMS = (claim_flat_hbar, claim_flat_limit, claim_trivial_double_well, claim_gradient_inclusions,
          claim_adjoint_exactness, claim_identities, claim_measure_bounds, claim_exp_transform,
          claim_vertex_not_solution, claim_sandwich, claim_cauchy)


def run_claim(fn, ctx: ClaimContext) -> ClaimResult:
    t = time.perf_counter()
    res = fn(ctx)
    res.runtime = time.perf_counter() - t
    return res


def run_all(ctx: ClaimContext | None = None) -> list[ClaimResult]:
    ctx = ctx or ClaimContext()
    return [run_claim(fn, ctx) for fn in CLAIMS]
