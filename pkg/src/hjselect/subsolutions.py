"""One-dimensional subsolution tools.

Admissible slope sets ``{q : H(x, P+q) <= level}``, maximal subsolutions
``S(., y)`` built from them, viscosity sub/supersolution residuals at the
nodes of a grid function, and the explicit constructions for the
quasi-convex Hamiltonian ``F(|p|) - V`` whose profile F has a flat part.

``level`` always refers to the value of H, so for ``H = F(|P+q|) - V`` the
cell problem with effective constant 1 corresponds to ``level = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect

from .errors import (ConfigError, DisconnectedSublevel, DomainOverflow, EmptyInterval,
                     RootNotBracketed)
from .grid import GridFunction, TorusGrid, slopes
from .models import Hamiltonian, TriangularBump

BISECT_TOL = 1e-12
CORNER_SAMPLES = 33


@dataclass(frozen=True)
class SlopeInterval:
    """Sublevel set of a slope slice; ``components`` lists its connected pieces."""

    lo: float
    hi: float
    connected: bool = True
    components: tuple = ()

    def __post_init__(self):
        if self.lo > self.hi:
            raise ConfigError("SlopeInterval requires lo <= hi")
        if not self.components:
            object.__setattr__(self, "components", ((self.lo, self.hi),))


def _slice(H: Hamiltonian, x: float, P: Optional[float]):
    if P is None:
        return lambda q: float(H(x, q)), tuple(float(c) for c in H.critical_slopes)
    return (lambda q: float(H.full(x, P + q)),
            tuple(float(c) - P for c in H.critical_momenta))


def _last_true(pred, a: float, b: float) -> float:
    """Largest t in [a, b] with pred(t), given pred(a) and not pred(b)."""
    while b - a > BISECT_TOL * max(1.0, abs(a), abs(b)):
        m = 0.5 * (a + b)
        if pred(m):
            a = m
        else:
            b = m
    return a


def admissible_slopes(H: Hamiltonian, x: float, level: float, P: Optional[float] = None) -> SlopeInterval:
    """``{q : H(x, P+q) <= level}`` by bisection on each monotone branch.

    With ``P=None`` the Hamiltonian's own momentum shift is used.  The
    slice is assumed monotone between the listed critical slopes and
    coercive outside them.
    """
    g, crit = _slice(H, x, P)
    crit = sorted(set(crit))
    if not crit:
        crit = [0.0]
    below = lambda q: g(q) <= level
    # outer brackets where the slice exceeds the level
    span = 1.0
    while not (g(crit[0] - span) > level and g(crit[-1] + span) > level):
        span *= 2.0
        if span > 2.0 ** 40:
            raise EmptyInterval("slice does not exceed the level; Hamiltonian not coercive?")
    knots = [crit[0] - span] + crit + [crit[-1] + span]
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        ina, inb = below(a), below(b)
        if ina and inb:
            pieces.append([a, b])
        elif ina:
            pieces.append([a, _last_true(below, a, b)])
        elif inb:
            pieces.append([-_last_true(lambda t: below(-t), -b, -a), b])
    if not pieces:
        raise EmptyInterval(f"level {level} is below min_q H at x={x}")
    merged = [pieces[0]]
    for lo, hi in pieces[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    comps = tuple((float(a), float(b)) for a, b in merged)
    return SlopeInterval(comps[0][0], comps[-1][1], len(comps) == 1, comps)


def slope_bounds(H: Hamiltonian, grid: TorusGrid, level: float, P: Optional[float] = None,
                 require_connected: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Nodewise ``lo`` and ``hi`` of the admissible slope sets."""
    lo = np.empty(grid.n_points)
    hi = np.empty(grid.n_points)
    for i, x in enumerate(grid.nodes):
        iv = admissible_slopes(H, float(x), level, P)
        if require_connected and not iv.connected:
            raise DisconnectedSublevel(f"sublevel set at x={x} has {len(iv.components)} components")
        lo[i], hi[i] = iv.lo, iv.hi
    return lo, hi


@dataclass(frozen=True, eq=False)
class MaximalSubsolution:
    y: float
    S: GridFunction
    cut_point: float


def maximal_subsolution(H: Hamiltonian, level: float, y: float, grid: TorusGrid,
                        P: Optional[float] = None) -> MaximalSubsolution:
    """Largest subsolution vanishing at the vertex ``y`` (snapped to a node).

    In one dimension it is the smaller of the two paths from ``y``: rising
    at the largest admissible slope to the right, or at the steepest
    admissible descent read backwards from the left.  Trapezoid quadrature
    on the grid.
    """
    lo, hi = slope_bounds(H, grid, level, P)
    n, h = grid.n_points, grid.spacing
    iy = grid.node_index(y)
    order = (iy + np.arange(n + 1)) % n
    hi_path = hi[order]
    lo_path = lo[order]
    right = np.concatenate([[0.0], np.cumsum(0.5 * h * (hi_path[:-1] + hi_path[1:]))])
    back = np.concatenate([[0.0], np.cumsum(0.5 * h * (-lo_path[::-1][:-1] - lo_path[::-1][1:]))])[::-1]
    vals = np.minimum(right, back)[:n]
    S = np.empty(n)
    S[order[:n]] = vals
    k = int(np.argmax(right[:n] > back[:n])) if np.any(right[:n] > back[:n]) else n
    cut = float(grid.nodes[order[k % n]])
    return MaximalSubsolution(float(grid.nodes[iy]), GridFunction(grid, S), cut)


def viscosity_residuals(u: GridFunction, H: Hamiltonian, level: float, P: Optional[float] = None,
                        samples: int = CORNER_SAMPLES, corner_tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Nodewise ``(sub_res, super_res)``; positive entries are violations.

    At a node where the one-sided slopes agree (within ``corner_tol``) both
    tests use them directly.  At a concave corner ``d- > d+`` the
    superdifferential is ``[d+, d-]``, sampled with ``samples`` points for the
    subsolution test, while the supersolution test is vacuous (``-inf``).
    Convex corners are the mirror image.
    """
    grid = u.grid
    dm, dp = slopes(u.values, grid.spacing)
    t = np.linspace(0.0, 1.0, samples)
    sub = np.full(grid.n_points, -np.inf)
    sup = np.full(grid.n_points, -np.inf)
    for i, x in enumerate(grid.nodes):
        g, _ = _slice(H, float(x), P)
        gap = dm[i] - dp[i]
        if abs(gap) <= corner_tol * max(1.0, abs(dm[i])):
            vals = np.array([g(dm[i]), g(dp[i])])
            sub[i] = vals.max() - level
            sup[i] = level - vals.min()
            continue
        vals = np.array([g(q) for q in dp[i] + t * gap])
        if gap > 0.0:
            sub[i] = vals.max() - level
        else:
            sup[i] = level - vals.min()
    return sub, sup


# --------------------------------------------------------------------------
# explicit constructions for F(|3/2 + q|) - V with the triangular V
# --------------------------------------------------------------------------


def explicit_w(y: float, grid: TorusGrid) -> GridFunction:
    """Zero at y, slope 1/2 on (y, y+7/8) and -7/2 on (y-1/8, y)."""
    d = np.mod(grid.nodes - y, 1.0)
    return GridFunction(grid, np.where(d <= 7.0 / 8.0, 0.5 * d, 3.5 * (1.0 - d)))


def _check_s(s: float) -> None:
    if not (0.0 < s < 0.25):
        raise ConfigError("s must lie in (0, 1/4)")


def flat_limit_profile(s: float, x) -> np.ndarray:
    """Closed-form limit: slope 1/2+V on (0, 2s), -1/2 on (2s, b), zero on [b, 1]."""
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    b = 4 * s + 2 * s * s
    rising = np.where(x <= s, 0.5 * x + 0.5 * x * x, 0.5 * x + s * s - 0.5 * (2 * s - x) ** 2)
    falling = s + s * s - 0.5 * (x - 2 * s)
    return np.where(x <= 2 * s, rising, np.where(x < b, falling, 0.0))


def analytic_flat_limit(s: float, grid: TorusGrid) -> tuple[GridFunction, float]:
    """Limit ``u0`` of ``u_eps + 1/eps`` and the point ``b = 4s + 2s^2`` where it returns to 0."""
    _check_s(s)
    b = 4 * s + 2 * s * s
    if b >= 1.0:
        raise DomainOverflow(f"b = {b} >= 1")
    return GridFunction(grid, flat_limit_profile(s, grid.nodes)), b


@dataclass(frozen=True)
class FlatConstruction:
    v: GridFunction
    a: float
    b: float


def _exp_integral(eps: float, V: TriangularBump, c: float, x0: float, x1: float) -> float:
    """``int_{x0}^{x1} e^{eps (r - x1)} (c + V(r)) dr``."""
    pts = [p for p in (V.s, 2 * V.s) if x0 < p < x1]
    val, _ = quad(lambda r: np.exp(eps * (r - x1)) * (c + V(r)), x0, x1, points=pts or None,
                  epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def flat_discounted_construction(s: float, epsilon: float, grid: TorusGrid) -> FlatConstruction:
    """Explicit solution of ``eps v + F(|3/2 + v'|) = 1 + V`` by three pieces.

    Rising ODE branch ``v' = 1/2 + V - eps v`` from ``v(0) = 0`` up to ``a``
    where ``eps v(a) = V(a)``; falling branch ``v' = -1/2 + V - eps v`` up to
    the first zero ``b > 2s``; zero afterwards.
    """
    _check_s(s)
    if epsilon <= 0.0:
        raise ConfigError("epsilon must be positive")
    V = TriangularBump(s)

    def rise(x):
        return _exp_integral(epsilon, V, 0.5, 0.0, x)

    def phi_a(a):
        return epsilon * rise(a) - V(a)

    if not phi_a(s) < 0.0 < phi_a(2 * s):
        raise RootNotBracketed("no a in (s, 2s) with eps v(a) = V(a)")
    a = bisect(phi_a, s, 2 * s, xtol=BISECT_TOL)
    va = rise(a)

    def fall(x):
        return np.exp(epsilon * (a - x)) * va + _exp_integral(epsilon, V, -0.5, a, x)

    # first sign change after 2s, then bisection
    xs = np.linspace(2 * s, 1.0, 2049)
    fv = np.array([fall(x) for x in xs])
    neg = np.nonzero(fv <= 0.0)[0]
    if fv[0] <= 0.0 or neg.size == 0:
        raise RootNotBracketed("v does not return to zero on (2s, 1)")
    k = int(neg[0])
    b = bisect(fall, xs[k - 1], xs[k], xtol=BISECT_TOL)

    vals = np.zeros(grid.n_points)
    for i, x in enumerate(grid.nodes):
        if 0.0 < x <= a:
            vals[i] = rise(x)
        elif a < x < b:
            vals[i] = fall(x)
    return FlatConstruction(GridFunction(grid, vals), float(a), float(b))


SUBSOLUTION_DICTIONARY_VERSION = "subsol_v1"


def subsolution_dictionary(grid: TorusGrid, s: float = 0.1) -> list[tuple[str, GridFunction]]:
    """Explicit subsolutions of the flat-profile cell problem (level 1).

    Constants, the piecewise-linear ``w`` with vertex y for a few vertices,
    and the closed-form limit.
    """
    out = [(f"const{c:+g}", grid.constant(c)) for c in (-1.0, -0.5, 0.0, 0.5, 1.0)]
    out += [(f"w_y={y:g}", explicit_w(y, grid)) for y in (0.0, 0.3, 0.55, 0.8)]
    out.append(("u0", analytic_flat_limit(s, grid)[0]))
    return out
