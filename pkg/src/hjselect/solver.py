"""Monotone finite-difference solvers for discounted Hamilton-Jacobi equations.

Three problems share one discretization::

    eps u + H(x, Du) = 0                                   (discounted)
    f(x, eps v) + G(x, Dv) = 0                             (generalized)
    f(x, eps v) + G(x, Dv) = eta^2 v''                     (viscous)

Nodes carry ``eps v_i + Ghat(x_i, d-_i, d+_i)`` where ``Ghat`` is a monotone
numerical Hamiltonian of the one-sided slopes.  Two fluxes are available:

* ``"godunov"`` (default): the exact extremum of G over the slope interval,
  min when ``d- <= d+`` and max otherwise;
* ``"lax_friedrichs"``: ``G(x, (d- + d+)/2) - sigma (d+ - d-)/2``.

The nonlinear system is solved by a damped fixed-point iteration
preconditioned with the (cyclic tridiagonal) Jacobian of the scheme, i.e. a
semismooth Newton method with backtracking.  The plain Jacobi-preconditioned
iteration is kept as ``method="fixed_point"``; its contraction factor is
``1 - O(eps h)`` so it is only practical for coarse grids.

Grids finer than ``coarse_start`` nodes are first solved on the half grid
(from the restricted warm start, if any) and the result interpolated; Newton
started far from the solution needs thousands of damped steps on fine grids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (ConfigError, InvalidSigma, MonotonicityViolation, NegativeRadicand,
                     NonConvergence)
from .grid import GridFunction, TorusGrid, resample, slopes
from .linalg import CyclicTridiagonal
from .models import GeneralizedDiscount, Hamiltonian, LinearDiscount

logger = logging.getLogger(__name__)

SCHEMES = ("godunov", "lax_friedrichs")


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.

    ``sigma`` and ``p_cap`` only matter for the Lax-Friedrichs flux; when
    ``sigma`` is None it is set to 1.05 times the largest ``|D_p G|`` over
    slopes ``|q| <= p_cap`` (``p_cap`` None: an a priori slope bound derived
    from coercivity).
    """

    scheme: str = "godunov"
    sigma: Optional[float] = None
    p_cap: Optional[float] = None
    damping: float = 0.9
    tol: float = 1e-10
    max_iter: int = 1_000_000
    eta: float = 0.0
    method: str = "newton"
    coarse_start: int = 256

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.method not in ("newton", "fixed_point"):
            raise ConfigError(f"unknown method {self.method!r}")
        if not (0.0 < self.damping <= 1.0):
            raise ConfigError("damping must lie in (0, 1]")
        if self.tol <= 0.0 or self.max_iter < 1 or self.eta < 0.0:
            raise ConfigError("tol > 0, max_iter >= 1 and eta >= 0 required")
        if self.sigma is not None and self.sigma <= 0.0:
            raise ConfigError("sigma must be positive")
        if self.coarse_start < 0:
            raise ConfigError("coarse_start must be >= 0")


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Output of a solve.

    ``u`` is the solution of the problem that was posed.  For discounted
    solves ``shift`` records the constant used internally: the solver works
    with ``v = u + shift/eps``, which stays O(1) when ``shift`` is close to the
    ergodic constant; ``v`` is returned without the cancellation error of
    forming ``u + shift/eps`` afterwards.
    """

    u: GridFunction
    epsilon: float
    residual: float
    iterations: int
    converged: bool
    lipschitz: float
    shift: float = 0.0
    v: Optional[GridFunction] = field(default=None, repr=False)
    sigma: Optional[float] = None

    def normalized(self, hbar: float) -> GridFunction:
        """``u + hbar/eps`` computed from the internally stored ``v``."""
        base = self.v if self.v is not None else self.u
        return GridFunction(self.u.grid, base.values + (hbar - self.shift) / self.epsilon)


# --------------------------------------------------------------------------
# numerical Hamiltonians
# --------------------------------------------------------------------------


def numerical_hamiltonian(H, x, d_minus, d_plus, sigma):
    """Lax-Friedrichs flux ``H(x, (d- + d+)/2) - sigma (d+ - d-)/2``.

    ``H`` is any callable ``H(x, p)``; for a :class:`Hamiltonian` the slope
    form ``H(x, q)`` (momentum ``P`` folded in) is what gets called.
    """
    d_minus = np.asarray(d_minus, dtype=float)
    d_plus = np.asarray(d_plus, dtype=float)
    out = H(x, 0.5 * (d_minus + d_plus)) - 0.5 * sigma * (d_plus - d_minus)
    return float(out) if np.ndim(out) == 0 else out


def lax_friedrichs_flux(G, dG, x, a, b, sigma):
    """Lax-Friedrichs value and its partial derivatives in ``a = d-``, ``b = d+``."""
    c = 0.5 * (a + b)
    g = dG(x, c)
    return G(x, c) - 0.5 * sigma * (b - a), 0.5 * (g + sigma), 0.5 * (g - sigma)


def godunov_flux(G, dG, x, a, b, critical=()):
    """Godunov flux: ``min_{[a,b]} G`` if ``a <= b`` else ``max_{[b,a]} G``.

    Returns the value and a generalized gradient ``(dA, dB)`` with
    ``dA >= 0 >= dB``.  ``critical`` lists every slope where ``G(x, .)`` can
    have an interior extremum.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ga, gb = G(x, a), G(x, b)
    dga, dgb = dG(x, a), dG(x, b)
    use_min = a <= b
    prefer_a = np.where(use_min, ga < gb, ga > gb)
    # ties (in particular a == b): attribute to the upwind endpoint
    tie = ga == gb
    prefer_a = np.where(tie, dga >= 0.0, prefer_a)
    val = np.where(prefer_a, ga, gb)
    dA = np.where(prefer_a, dga, 0.0)
    dB = np.where(prefer_a, 0.0, dgb)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    for cpt in critical:
        inside = (lo < cpt) & (cpt < hi)
        if not np.any(inside):
            continue
        gc = G(x, np.full_like(a, cpt))
        better = inside & np.where(use_min, gc < val, gc > val)
        val = np.where(better, gc, val)
        dA = np.where(better, 0.0, dA)
        dB = np.where(better, 0.0, dB)
    return val, np.maximum(dA, 0.0), np.minimum(dB, 0.0)


# --------------------------------------------------------------------------
# discrete operator
# --------------------------------------------------------------------------


class SchemeOperator:
    """Residual map ``R(v)_i = f(x_i, eps v_i) + Ghat_i - eta^2 (D2 v)_i`` and its Jacobian."""

    def __init__(self, gd: GeneralizedDiscount, epsilon: float, grid: TorusGrid,
                 cfg: SolverConfig, eta: Optional[float] = None):
        if epsilon <= 0.0:
            raise ConfigError("epsilon must be positive")
        self.gd = gd
        self.epsilon = float(epsilon)
        self.grid = grid
        self.cfg = cfg
        self.eta = cfg.eta if eta is None else float(eta)
        self.x = grid.nodes
        self.h = grid.spacing
        self.critical = tuple(gd.critical_slopes)
        self.sigma = None
        if cfg.scheme == "lax_friedrichs":
            self.sigma = cfg.sigma if cfg.sigma is not None else default_sigma(gd, grid, cfg.p_cap)

    def flux(self, v):
        dm, dp = slopes(v, self.h)
        if self.sigma is None:
            val, da, db = godunov_flux(self.gd.G, self.gd.dG, self.x, dm, dp, self.critical)
        else:
            val, da, db = lax_friedrichs_flux(self.gd.G, self.gd.dG, self.x, dm, dp, self.sigma)
        return val, da, db

    def residual(self, v: np.ndarray) -> np.ndarray:
        val, _, _ = self.flux(v)
        out = self.gd.f(self.x, self.epsilon * v) + val
        if self.eta > 0.0:
            out = out - self.eta ** 2 * (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / self.h ** 2
        return out

    def residual_and_jacobian(self, v: np.ndarray):
        val, da, db = self.flux(v)
        h = self.h
        fr = self.epsilon * self.gd.f_r(self.x, self.epsilon * v)
        res = self.gd.f(self.x, self.epsilon * v) + val
        lower = -da / h
        diag = fr + (da - db) / h
        upper = db / h
        if self.eta > 0.0:
            k = self.eta ** 2 / h ** 2
            res = res - k * (np.roll(v, -1) - 2.0 * v + np.roll(v, 1))
            lower = lower - k
            upper = upper - k
            diag = diag + 2.0 * k
        return res, CyclicTridiagonal(lower, diag, upper), fr

    def check_monotone(self, v: np.ndarray) -> None:
        if self.sigma is None:
            return
        dm, dp = slopes(v, self.h)
        need = float(np.max(np.abs(self.gd.dG(self.x, 0.5 * (dm + dp)))))
        if need > self.sigma * (1.0 + 1e-12):
            raise InvalidSigma(f"sigma={self.sigma:.4g} below max |D_pG|={need:.4g} at the solution")


def slope_bound(gd: GeneralizedDiscount, grid: TorusGrid, n_sample: int = 64) -> float:
    """A priori bound on |Dv| from coercivity of G.

    Constants ``r_x/eps`` with ``f(x, r_x) + G(x, 0) = 0`` bracket ``v`` by
    comparison, so ``G(x, Dv) <= max_x -f(x, min r_x)``; slopes live in the
    set where ``min_x G(x, q)`` stays below that level.
    """
    xs = grid.nodes[:: max(1, grid.n_points // n_sample)]
    roots = np.array([gd.initial_constant(float(x)) for x in xs])
    level = float(np.nanmax(-gd.f(xs, np.full_like(xs, roots.min()))))
    q = np.linspace(-64.0, 64.0, 25601)
    gmin = np.min(np.stack([gd.G(np.full_like(q, x), q) for x in xs]), axis=0)
    ok = q[gmin <= level]
    if ok.size == 0:
        return 1.0
    return float(max(abs(ok.min()), abs(ok.max())))


def default_sigma(gd: GeneralizedDiscount, grid: TorusGrid, p_cap: Optional[float] = None,
                  n_sample: int = 64) -> float:
    cap = slope_bound(gd, grid) * 1.25 + 0.1 if p_cap is None else float(p_cap)
    xs = grid.nodes[:: max(1, grid.n_points // n_sample)]
    q = np.linspace(-cap, cap, 4001)
    dg = np.stack([np.abs(gd.dG(np.full_like(q, x), q)) for x in xs])
    return 1.05 * float(np.max(dg))


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------


def _finite_max(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else np.inf


def _iterate(op: SchemeOperator, v0: np.ndarray) -> tuple[np.ndarray, float, int, bool]:
    cfg = op.cfg
    v = np.array(v0, dtype=float)
    res = op.residual(v)
    rnorm = _finite_max(res)
    if not np.isfinite(rnorm):
        raise NegativeRadicand("discount term undefined at the initial guess")
    if cfg.method == "fixed_point":
        for it in range(1, cfg.max_iter + 1):
            if rnorm <= cfg.tol:
                return v, rnorm, it - 1, True
            res, J, fr = op.residual_and_jacobian(v)
            _check_increasing(fr)
            v = v - cfg.damping * res / J.diag
            rnorm = _finite_max(op.residual(v))
            if not np.isfinite(rnorm):
                raise NegativeRadicand("discount term undefined during iteration")
        return v, rnorm, cfg.max_iter, rnorm <= cfg.tol

    it = 0
    stall = 0
    while it < cfg.max_iter:
        res, J, fr = op.residual_and_jacobian(v)
        rnorm = _finite_max(res)
        if rnorm <= max(cfg.tol, _roundoff_floor(J, v)):
            return v, rnorm, it, True
        _check_increasing(fr)
        it += 1
        step = J.solve(-res)
        t = 1.0
        accepted = False
        best = None
        while t >= 1e-10:
            trial = v + t * step
            tnorm = _finite_max(op.residual(trial))
            if tnorm < (1.0 - 1e-4 * t) * rnorm:
                accepted = True
                break
            if np.isfinite(tnorm) and (best is None or tnorm < best[1]):
                best = (trial, tnorm)
            t *= 0.5
        if accepted:
            v = trial
            stall = 0
            continue
        # nonsmooth stall: take the least-bad finite trial and keep going
        stall += 1
        if best is None:
            raise NegativeRadicand("no admissible step keeps the discount term defined")
        if stall > 50:
            break
        v = best[0] if best[1] < 10.0 * rnorm else v + cfg.damping * step / max(1.0, np.max(np.abs(step)))
    res, J, _ = op.residual_and_jacobian(v)
    rnorm = _finite_max(res)
    return v, rnorm, it, rnorm <= max(cfg.tol, _roundoff_floor(J, v))


def _roundoff_floor(J: CyclicTridiagonal, v: np.ndarray) -> float:
    """Residual level below which rounding in ``v`` dominates.

    Forming slopes of values of size ``|v|`` costs about ``eps_mach |v| / h``,
    amplified by the Jacobian row size.
    """
    scale = np.abs(J.lower) + np.abs(J.diag) + np.abs(J.upper)
    return 16.0 * np.finfo(float).eps * float(np.max(scale) * (np.max(np.abs(v)) + 1.0))


def _check_increasing(fr: np.ndarray) -> None:
    if not np.all(fr > 0.0):
        if np.any(np.isnan(fr)):
            raise NegativeRadicand("discount derivative undefined during iteration")
        raise MonotonicityViolation("f(x, .) found non-increasing on the traversed range")


def _use_coarse(grid: TorusGrid, cfg: SolverConfig) -> bool:
    return cfg.method == "newton" and cfg.coarse_start > 0 and grid.n_points > cfg.coarse_start \
        and grid.n_points % 2 == 0 and grid.n_points // 2 >= 8


def lipschitz_estimate(u) -> float:
    """Largest one-sided slope magnitude of ``u``."""
    if isinstance(u, GridFunction):
        vals, h = u.values, u.grid.spacing
    else:
        raise TypeError("lipschitz_estimate expects a GridFunction")
    dm, dp = slopes(vals, h)
    return float(max(np.max(np.abs(dm)), np.max(np.abs(dp))))


def solve_generalized(gd: GeneralizedDiscount, epsilon: float, grid: TorusGrid,
                      cfg: SolverConfig = SolverConfig(), initial=None,
                      raise_on_failure: bool = True) -> SolveResult:
    """Solve ``f(x, eps v) + Ghat(x, Dv) - eta^2 D2 v = 0`` (``eta = cfg.eta``)."""
    op = SchemeOperator(gd, epsilon, grid, cfg)
    if isinstance(initial, SolveResult):
        initial = initial.u
    if _use_coarse(grid, cfg) and (initial is None or isinstance(initial, GridFunction)):
        half = TorusGrid(grid.n_points // 2)
        guess = None if initial is None else resample(initial, half)
        initial = solve_generalized(gd, epsilon, half, cfg, initial=guess, raise_on_failure=False).u
    if initial is None:
        v0 = np.full(grid.n_points, gd.initial_constant(0.0) / epsilon)
    elif isinstance(initial, GridFunction):
        v0 = resample(initial, grid).values
    else:
        v0 = np.asarray(initial, dtype=float)
    v, rnorm, its, ok = _iterate(op, v0)
    if not ok and raise_on_failure:
        raise NonConvergence("generalized solve did not converge", rnorm, its)
    op.check_monotone(v)
    gf = GridFunction(grid, v)
    return SolveResult(gf, float(epsilon), rnorm, its, ok, lipschitz_estimate(gf), 0.0, gf, op.sigma)


def solve_discounted(H: Hamiltonian, epsilon: float, grid: TorusGrid,
                     cfg: SolverConfig = SolverConfig(), initial=None, shift: Optional[float] = None,
                     raise_on_failure: bool = True) -> SolveResult:
    """Solve ``eps u + Hhat(x, Du) = 0`` on ``grid``.

    ``shift`` (default ``H(x_0, 0)``) is subtracted internally so the unknown
    ``v = u + shift/eps`` stays O(1); pass the ergodic constant when known.
    ``initial`` is a warm start for ``u`` (GridFunction or SolveResult).
    """
    if epsilon <= 0.0:
        raise ConfigError("epsilon must be positive")
    if shift is None:
        if isinstance(initial, SolveResult):
            shift = float(np.mean(-initial.epsilon * initial.u.values))
        else:
            shift = float(H(0.0, 0.0))
    gd = LinearDiscount(H, shift)
    if _use_coarse(grid, cfg) and (initial is None or isinstance(initial, (SolveResult, GridFunction))):
        half = TorusGrid(grid.n_points // 2)
        guess = initial
        if isinstance(initial, SolveResult):
            guess = resample(initial.normalized(shift), half) - shift / epsilon
        elif isinstance(initial, GridFunction):
            guess = resample(initial, half)
        initial = solve_discounted(H, epsilon, half, cfg, initial=guess, shift=shift,
                                   raise_on_failure=False)
    if initial is None:
        v0 = np.zeros(grid.n_points)
    elif isinstance(initial, SolveResult):
        v0 = resample(initial.normalized(shift), grid).values
    elif isinstance(initial, GridFunction):
        v0 = resample(initial, grid).values + shift / epsilon
    else:
        v0 = np.asarray(initial, dtype=float) + shift / epsilon
    cfg_inviscid = replace(cfg, eta=0.0)
    op = SchemeOperator(gd, epsilon, grid, cfg_inviscid)
    v, rnorm, its, ok = _iterate(op, v0)
    if not ok and raise_on_failure:
        raise NonConvergence("discounted solve did not converge", rnorm, its)
    op.check_monotone(v)
    u = GridFunction(grid, v - shift / epsilon)
    vg = GridFunction(grid, v)
    return SolveResult(u, float(epsilon), rnorm, its, ok, lipschitz_estimate(vg), float(shift), vg, op.sigma)


def residual_field(u: GridFunction, H: Hamiltonian, epsilon: float,
                   cfg: SolverConfig = SolverConfig()) -> GridFunction:
    """Nodewise ``eps u_i + Hhat_i`` for the discounted scheme."""
    op = SchemeOperator(LinearDiscount(H, 0.0), epsilon, u.grid, replace(cfg, eta=0.0))
    return GridFunction(u.grid, op.residual(u.values))
