"""Effective Hamiltonians, vanishing-discount limits and selection checks.

``-eps u_eps(x0)`` tends to the effective constant ``hbar`` and
``v_eps = u_eps + hbar/eps`` to a particular solution of the cell problem.
This module estimates ``hbar`` along a discount ladder, follows ``v_eps``,
rewrites the discounted problem in generalized form (exponential transform
for strictly quasi-convex H; branch rewrites for the double well), and
checks the constraint that characterizes the selected limit.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .adjoint import weighted_pairing
from .errors import CaseMismatch, ConfigError, HJSelectError, NonConvergence, NotASubsolution
from .grid import GridFunction, TorusGrid, max_norm_distance
from .models import (CustomHamiltonian, ExponentialDiscount, DoubleWellCaseDiscount,
                     GeneralizedDiscount, Hamiltonian, Kinetic, Potential,
                     oscillation)
from .solver import SolveResult, SolverConfig, solve_discounted

logger = logging.getLogger(__name__)

EXP_LAMBDA_MAX = 2.0 ** 20


# --------------------------------------------------------------------------
# effective constant
# --------------------------------------------------------------------------


def richardson(eps: Sequence[float], values: Sequence[float]) -> float:
    """Extrapolate ``g(eps) = g0 + c eps`` to ``eps = 0`` from the last two entries."""
    e1, e2 = float(eps[-2]), float(eps[-1])
    g1, g2 = float(values[-2]), float(values[-1])
    return (e1 * g2 - e2 * g1) / (e1 - e2)


@dataclass(frozen=True, eq=False)
class ErgodicEstimate:
    hbar: float
    eps_ladder: tuple
    extrapolation_gap: float
    x0: float = 0.0
    results: tuple = field(default=(), repr=False)

    @property
    def last(self) -> SolveResult:
        return self.results[-1]


def _check_ladder(eps_seq, minimum: int) -> list:
    eps = [float(e) for e in eps_seq]
    if len(eps) < minimum:
        raise ConfigError(f"discount ladder needs at least {minimum} entries")
    if any(e <= 0.0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("discount ladder must be positive and strictly decreasing")
    return eps


def estimate_ergodic_constant(H: Hamiltonian, grid: TorusGrid, eps_seq: Sequence[float],
                              cfg: SolverConfig = SolverConfig(), x0: float = 0.0,
                              cauchy_tol: float = 0.1) -> ErgodicEstimate:
    """Richardson-extrapolated limit of ``-eps u_eps(x0)`` along ``eps_seq``.

    Each solve is warm-started from the previous one.  ``-eps u(x0)`` is
    read as ``shift - eps v(x0)`` so no large cancellation occurs.
    """
    eps = _check_ladder(eps_seq, 3)
    i0 = grid.node_index(x0)
    ladder, results = [], []
    prev = None
    for e in eps:
        res = solve_discounted(H, e, grid, cfg, initial=prev)
        ladder.append((e, res.shift - e * float(res.v[i0])))
        results.append(res)
        prev = res
    vals = [g for _, g in ladder]
    gap = abs(vals[-1] - vals[-2])
    if not np.isfinite(gap) or gap > cauchy_tol:
        raise NonConvergence(f"ergodic ladder not Cauchy (last gap {gap:.3g})", gap, len(eps))
    return ErgodicEstimate(richardson(eps, vals), tuple(ladder), gap, float(grid.nodes[i0]), tuple(results))


@dataclass(frozen=True)
class SweepPoint:
    P: float
    hbar: float
    extrapolation_gap: float
    error: Optional[str] = None


def _sweep_one(args) -> SweepPoint:
    family, P, grid, eps_seq, cfg = args
    try:
        est = estimate_ergodic_constant(family(P), grid, eps_seq, cfg)
        return SweepPoint(float(P), est.hbar, est.extrapolation_gap)
    except HJSelectError as exc:
        return SweepPoint(float(P), float("nan"), float("nan"), f"{type(exc).__name__}: {exc}")


def sweep_effective_hamiltonian(family: Callable[[float], Hamiltonian], P_grid: Iterable[float],
                                grid: TorusGrid, eps_seq: Sequence[float],
                                cfg: SolverConfig = SolverConfig(), jobs: int = 1) -> list:
    """``hbar(P)`` over ``P_grid``; failing points are flagged, not fatal.

    With ``jobs > 1`` the points are distributed over a process pool, so
    ``family`` must be picklable.  Output order follows ``P_grid``.
    """
    Ps = [float(p) for p in P_grid]
    if any(b < a for a, b in zip(Ps, Ps[1:])):
        raise ConfigError("P_grid must be sorted")
    tasks = [(family, P, grid, tuple(eps_seq), cfg) for P in Ps]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]


# --------------------------------------------------------------------------
# vanishing discount limit
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LimitStudy:
    eps_seq: tuple
    v_eps: tuple
    cauchy_gaps: np.ndarray
    u0: GridFunction
    hbar: float
    results: tuple = field(default=(), repr=False)

    def gaps_decreasing(self, last: int = 3) -> bool:
        """Strict decrease over the final ``last`` gaps (zeros count as decreasing)."""
        g = self.cauchy_gaps[-last:]
        return bool(np.all((np.diff(g) < 0.0) | (g[1:] == 0.0)))


def vanishing_discount_limit(H: Hamiltonian, hbar: float, grid: TorusGrid, eps_seq: Sequence[float],
                             cfg: SolverConfig = SolverConfig(), check: bool = True) -> LimitStudy:
    """Follow ``v_eps = u_eps + hbar/eps`` down the ladder (warm starts).

    The solver works directly in ``v`` (``shift = hbar``).  With ``check``,
    NonConvergence is raised when the last gap exceeds the one before it.
    """
    eps = _check_ladder(eps_seq, 2)
    vs, results = [], []
    prev = None
    for e in eps:
        res = solve_discounted(H, e, grid, cfg, initial=prev, shift=hbar)
        vs.append(res.normalized(hbar))
        results.append(res)
        prev = res
    gaps = np.array([max_norm_distance(a, b) for a, b in zip(vs, vs[1:])])
    if check and gaps.size >= 2 and gaps[-1] > gaps[-2] and gaps[-1] > 0.0:
        raise NonConvergence("v_eps gaps are not decreasing", float(gaps[-1]), len(eps))
    return LimitStudy(tuple(eps), tuple(vs), gaps, vs[-1], float(hbar), tuple(results))


# --------------------------------------------------------------------------
# generalized rewrites
# --------------------------------------------------------------------------


def quasiconvexity_lambda(H: Hamiltonian, grid: TorusGrid, p_cap: float = 4.0,
                          n_p: int = 2001, n_x: int = 32) -> float:
    """Smallest power of two ``lam >= 1`` with ``lam H_p^2 + H_pp >= 0`` on samples.

    This is the one-dimensional form of the condition making ``exp(lam H)``
    convex in p; ``H_pp`` is a centred second difference of ``H_p``.
    """
    xs = grid.nodes[:: max(1, grid.n_points // n_x)]
    q = np.linspace(-p_cap, p_cap, n_p)
    step = 1e-5
    worst = 0.0
    for x in xs:
        xx = np.full_like(q, x)
        hp = H.dp(xx, q)
        hpp = (H.dp(xx, q + step) - H.dp(xx, q - step)) / (2 * step)
        neg = hpp < 0.0
        if np.any(neg & (hp ** 2 < 1e-14)):
            raise ConfigError("H_pp < 0 where H_p = 0: not strictly quasi-convex")
        if np.any(neg):
            worst = max(worst, float(np.max(-hpp[neg] / hp[neg] ** 2)))
    lam = 1.0
    while lam < worst:
        lam *= 2.0
        if lam > EXP_LAMBDA_MAX:
            raise ConfigError("no admissible exponent found")
    return lam


def exp_transform(H: Hamiltonian, lambda0: Optional[float] = None, hbar: float = 0.0,
                  grid: Optional[TorusGrid] = None, p_cap: float = 4.0) -> ExponentialDiscount:
    """``f(r) = -exp(-lambda0 r)``, ``G = exp(lambda0 (H - hbar))``.

    Solutions of ``eps u + H - hbar = 0`` and of the transformed problem
    coincide.  ``lambda0`` defaults to :func:`quasiconvexity_lambda`.
    """
    if lambda0 is None:
        lambda0 = quasiconvexity_lambda(H, grid or TorusGrid(64), p_cap)
    if lambda0 <= 0.0:
        raise ConfigError("lambda0 must be positive")
    return ExponentialDiscount(H, float(lambda0), float(hbar), convex=True)


def double_well_case(P: float, hbar: float, hbar_tol: float = 0.0) -> str:
    """Classify ``(P, hbar)``: 'a' (|P|<1, hbar>0), 'b' (|P|>1, hbar>0) or 'c' (hbar=0)."""
    if abs(hbar) <= hbar_tol:
        return "c"
    if hbar < 0.0:
        raise CaseMismatch(f"hbar={hbar} is negative")
    if abs(P) < 1.0:
        return "a"
    if abs(P) > 1.0:
        return "b"
    raise CaseMismatch("|P| = 1 with hbar > 0 fits none of the cases")


def double_well_case_transform(P: float, hbar: float, V: Potential) -> DoubleWellCaseDiscount:
    """Rewrite the double well on the branch selected by the a priori slope bounds.

    Case a: ``-sqrt(V + hbar - r) + 1 - |P+q|^2``; case b:
    ``-sqrt(V + hbar - r) + |P+q|^2 - 1``.
    """
    case = double_well_case(P, hbar)
    if case == "c":
        raise CaseMismatch("case c (hbar = 0) has no square-root rewrite")
    return DoubleWellCaseDiscount(float(P), float(hbar), V, case)


def gradient_inclusion_check(u: GridFunction, P: float, hbar: float, case_tag: str,
                             hbar_tol: float = 0.0) -> float:
    """Worst margin of the case's slope inclusion over all one-sided slopes.

    a: ``1 - |P + d|``;  b: ``P + d - 1`` (mirrored for P < -1);
    c: ``P + d`` (mirrored for P < 0).  Nonnegative means the inclusion holds.
    """
    expected = double_well_case(P, hbar, hbar_tol)
    if case_tag != expected:
        raise CaseMismatch(f"(P={P}, hbar={hbar}) is case {expected}, not {case_tag}")
    h = u.grid.spacing
    d = np.concatenate([(u.values - np.roll(u.values, 1)) / h, (np.roll(u.values, -1) - u.values) / h])
    m = P + d
    if case_tag == "a":
        return float(np.min(1.0 - np.abs(m)))
    if case_tag == "b":
        return float(np.min(m - 1.0)) if P > 0 else float(np.min(-m - 1.0))
    if P == 0.0:
        raise CaseMismatch("case c needs P != 0")
    return float(np.min(m)) if P > 0 else float(np.min(-m))


# --------------------------------------------------------------------------
# multiwell admissibility
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiwellSpec:
    """Kinetic profile summarized by its critical points and values there."""

    critical_points: tuple
    critical_values: tuple

    def __post_init__(self):
        p = tuple(float(v) for v in self.critical_points)
        if len(p) < 3 or len(p) % 2 == 0 or any(b <= a for a, b in zip(p, p[1:])):
            raise ConfigError("need an odd number (>= 3) of increasing critical points")
        if len(self.critical_values) != len(p):
            raise ConfigError("one critical value per critical point")
        object.__setattr__(self, "critical_points", p)
        object.__setattr__(self, "critical_values", tuple(float(v) for v in self.critical_values))

    @property
    def m(self) -> float:
        """Smallest height difference between neighbouring critical values."""
        v = np.asarray(self.critical_values)
        return float(np.min(np.abs(np.diff(v))))

    @classmethod
    def from_kinetic(cls, kinetic: Kinetic) -> "MultiwellSpec":
        pts = tuple(sorted(kinetic.critical_points))
        return cls(pts, tuple(float(kinetic.value(p)) for p in pts))


def multiwell_admissible(spec: MultiwellSpec, V: Potential) -> tuple[bool, float]:
    """``(osc(V) < m, m)``."""
    m = spec.m
    return bool(oscillation(V) < m), m


# --------------------------------------------------------------------------
# selection constraint
# --------------------------------------------------------------------------


def constraint_hamiltonian(gd: GeneralizedDiscount) -> CustomHamiltonian:
    """``q -> G(x, q) + f(x, 0)``: subsolutions of the limit problem have it <= 0."""

    def ev(x, q):
        return gd.G(x, q) + gd.f(x, np.zeros_like(np.asarray(x, dtype=float)))

    return CustomHamiltonian(ev, None, tuple(gd.critical_slopes), 0.0, "constraint")


def selection_constraint_check(w: GridFunction, measures, gd: GeneralizedDiscount, tol: float,
                               sub_tol: Optional[float] = None) -> bool:
    """True iff ``sum f_r(x, 0) w dmu <= tol`` for every measure.

    ``w`` must first pass the subsolution test for ``f(x, 0) + G(x, Dw) <= 0``
    within ``sub_tol`` (default ``2h``).
    """
    from .subsolutions import viscosity_residuals

    sub_tol = 2.0 * w.grid.spacing if sub_tol is None else sub_tol
    sub, _ = viscosity_residuals(w, constraint_hamiltonian(gd), 0.0)
    if np.max(sub) > sub_tol:
        raise NotASubsolution(f"subsolution residual {np.max(sub):.3g} exceeds {sub_tol:.3g}")
    return all(weighted_pairing(mu, gd, w) <= tol for mu in measures)
