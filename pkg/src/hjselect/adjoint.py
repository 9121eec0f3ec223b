"""Discrete nonlinear adjoint method and approximate Mather measures.

Given a solution ``v`` of the (possibly viscous) generalized problem, the
scheme is linearized at ``v`` and the transposed system

    L^T theta = eps * delta_{x0},    delta_{x0} = 1/h at the node x0,

is solved.  ``L`` carries ``eps f_r(x, 0)`` on the diagonal and a monotone
transport part built from ``D_pG`` at smoothed slopes, whose rows sum to
zero.  Summing the transposed system therefore gives
``h * sum f_r(x_i, 0) theta_i = 1`` up to rounding, and the M-matrix
structure gives ``theta >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import NonConvergence, SingularLinearization
from .grid import GridFunction, TorusGrid, slopes
from .linalg import CyclicTridiagonal
from .models import GeneralizedDiscount
from .solver import SolveResult, SolverConfig, default_sigma, solve_generalized

DICTIONARY_VERSION = "dict_v1"


@dataclass(frozen=True, eq=False)
class AdjointProblem:
    gd: GeneralizedDiscount
    v: GridFunction
    epsilon: float
    eta: float
    x0: int
    cfg: SolverConfig = SolverConfig()

    @property
    def grid(self) -> TorusGrid:
        return self.v.grid

    @property
    def smoothing_width(self) -> float:
        return self.grid.spacing


@dataclass(frozen=True, eq=False)
class AdjointSolution:
    theta: GridFunction
    mass_weighted: float
    operator: CyclicTridiagonal = field(repr=False)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Atoms ``(x_i, p_i, w_i)`` on grid nodes; ``width`` is the D_pG smoothing width."""

    grid: TorusGrid
    x: np.ndarray
    p: np.ndarray
    w: np.ndarray
    width: float = 0.0

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.w))

    def pair(self, psi: Callable) -> float:
        """``sum_i w_i psi(x_i, p_i)``."""
        return float(np.sum(self.w * np.asarray(psi(self.x, self.p), dtype=float)))

    def normalization(self, gd: GeneralizedDiscount) -> float:
        return self.pair(lambda x, p: gd.f_r0(x))

    def dG(self, gd: GeneralizedDiscount) -> np.ndarray:
        if self.width > 0.0:
            return gd.smoothed_dG(self.x, self.p, self.width)
        return gd.dG(self.x, self.p)


def smoothed_slopes(v: GridFunction) -> np.ndarray:
    """Average of the two one-sided slopes at each node."""
    dm, dp = slopes(v.values, v.grid.spacing)
    return 0.5 * (dm + dp)


def linearize_scheme(ap: AdjointProblem) -> CyclicTridiagonal:
    """Monotone linearization of the scheme at ``ap.v``.

    Transport coefficients ``b_i = D_pG(x_i, p_i)`` are evaluated as centred
    difference quotients of G (half-width h) at the averaged slopes ``p_i``.
    The Godunov scheme linearizes to upwind differences; Lax-Friedrichs keeps
    its central form with dissipation ``sigma``.
    """
    grid = ap.grid
    h = grid.spacing
    x = grid.nodes
    p = smoothed_slopes(ap.v)
    b = ap.gd.smoothed_dG(x, p, ap.smoothing_width)
    diag = ap.epsilon * ap.gd.f_r0(x)
    if ap.cfg.scheme == "lax_friedrichs":
        sigma = ap.cfg.sigma if ap.cfg.sigma is not None else default_sigma(ap.gd, grid, ap.cfg.p_cap)
        sigma = max(sigma, float(np.max(np.abs(b))))
        lower = -(b + sigma) / (2 * h)
        upper = (b - sigma) / (2 * h)
        diag = diag + sigma / h
    else:
        lower = -np.maximum(b, 0.0) / h
        upper = np.minimum(b, 0.0) / h
        diag = diag + np.abs(b) / h
    if ap.eta > 0.0:
        k = ap.eta ** 2 / h ** 2
        lower = lower - k
        upper = upper - k
        diag = diag + 2.0 * k
    if not np.all(diag > 0.0):
        raise SingularLinearization("non-positive diagonal in the linearized scheme")
    return CyclicTridiagonal(lower, diag, upper)


def solve_adjoint(ap: AdjointProblem) -> AdjointSolution:
    """Solve ``L^T theta = eps delta_{x0}``."""
    L = linearize_scheme(ap)
    h = ap.grid.spacing
    rhs = np.zeros(ap.grid.n_points)
    rhs[ap.x0 % ap.grid.n_points] = ap.epsilon / h
    theta = L.transpose().solve(rhs, refine=2)
    # the exact inverse is entrywise positive; subnormal entries carry no sign information
    theta[np.abs(theta) < np.finfo(float).tiny] = 0.0
    mass = h * float(np.sum(ap.gd.f_r0(ap.grid.nodes) * theta))
    return AdjointSolution(GridFunction(ap.grid, theta), mass, L)


def build_measure(ap: AdjointProblem, sol: AdjointSolution) -> DiscreteMeasure:
    grid = ap.grid
    w = grid.spacing * sol.theta.values
    return DiscreteMeasure(grid, grid.nodes.copy(), smoothed_slopes(ap.v), w, ap.smoothing_width)


def duality_defect(L: CyclicTridiagonal, theta: np.ndarray, g: np.ndarray) -> float:
    """``|<L^T theta, g> - <theta, L g>|`` relative to ``<|theta|, |L| |g|>``."""
    lhs = float(np.dot(L.rmatvec(theta), g))
    rhs = float(np.dot(theta, L.matvec(g)))
    absL = CyclicTridiagonal(np.abs(L.lower), np.abs(L.diag), np.abs(L.upper))
    scale = float(np.dot(np.abs(theta), absL.matvec(np.abs(g))))
    return abs(lhs - rhs) / scale if scale > 0.0 else abs(lhs - rhs)


def check_identity_i(mu: DiscreteMeasure, gd: GeneralizedDiscount) -> float:
    """``|sum w (D_pG p - G) - sum w f(x, 0)|``."""
    b = mu.dG(gd)
    lhs = np.sum(mu.w * (b * mu.p - gd.G(mu.x, mu.p)))
    rhs = np.sum(mu.w * gd.f(mu.x, np.zeros_like(mu.x)))
    return float(abs(lhs - rhs))


def check_identity_ii(mu: DiscreteMeasure, gd: GeneralizedDiscount, phi: GridFunction) -> float:
    """``|sum w D_pG . Dphi|`` with a centred difference for ``Dphi``."""
    h = phi.grid.spacing
    dphi = (np.roll(phi.values, -1) - np.roll(phi.values, 1)) / (2 * h)
    return float(abs(np.sum(mu.w * mu.dG(gd) * dphi)))


def weighted_pairing(mu: DiscreteMeasure, gd: GeneralizedDiscount, w: GridFunction) -> float:
    """``sum_i w_i f_r(x_i, 0) w(x_i)``: the quantity constrained to be <= 0."""
    return float(np.sum(mu.w * gd.f_r0(mu.x) * w.values))


def lower_bound_slack(mu: DiscreteMeasure, gd: GeneralizedDiscount, v: GridFunction,
                      w: GridFunction, x0: int) -> float:
    """``v(x0) - (w(x0) - sum w_i f_r w(x_i))``; nonnegative when the bound holds."""
    return float(v[x0] - (w[x0] - weighted_pairing(mu, gd, w)))


# --------------------------------------------------------------------------
# test-function dictionary and ladders
# --------------------------------------------------------------------------


def test_function_dictionary() -> list[tuple[str, Callable]]:
    """``p^a * m(x)`` for a <= 3 and m in {1, cos 2 pi k x, sin 2 pi k x}, k <= 3."""
    modes = [("1", lambda x: np.ones_like(x))]
    for k in (1, 2, 3):
        modes.append((f"cos{k}", lambda x, k=k: np.cos(2 * np.pi * k * x)))
        modes.append((f"sin{k}", lambda x, k=k: np.sin(2 * np.pi * k * x)))
    out = []
    for a in range(4):
        for name, m in modes:
            out.append((f"p{a}*{name}", lambda x, p, a=a, m=m: p ** a * m(x)))
    return out


test_function_dictionary.__test__ = False  # not a pytest test despite the name


@dataclass(frozen=True, eq=False)
class LadderStep:
    epsilon: float
    eta: float
    solve: SolveResult
    measure: DiscreteMeasure
    normalization: float
    min_theta: float
    pairings: np.ndarray
    adjoint: AdjointSolution = field(repr=False, default=None)


@dataclass(frozen=True, eq=False)
class MatherApproximation:
    """Ladder of adjoint measures and the finest one.

    ``extrapolated[j]`` holds the eta-extrapolated pairings at ``eps_seq[j]``;
    ``cauchy_gaps[j]`` the max difference between consecutive rows.
    """

    measure: DiscreteMeasure
    x0: int
    steps: list
    names: list
    extrapolated: np.ndarray
    eta_gaps: np.ndarray
    cauchy_gaps: np.ndarray
    identity_i: float
    identity_ii: float
    finest: LadderStep

    @property
    def version(self) -> str:
        return DICTIONARY_VERSION


def adjoint_step(gd: GeneralizedDiscount, epsilon: float, eta: float, x0: int, grid: TorusGrid,
                 cfg: SolverConfig = SolverConfig(), initial=None) -> LadderStep:
    """Solve the viscous problem, its adjoint, and assemble the measure."""
    solved = solve_generalized(gd, epsilon, grid, replace(cfg, eta=eta), initial=initial)
    ap = AdjointProblem(gd, solved.u, epsilon, eta, x0, cfg)
    sol = solve_adjoint(ap)
    mu = build_measure(ap, sol)
    pairs = np.array([mu.pair(psi) for _, psi in test_function_dictionary()])
    return LadderStep(epsilon, eta, solved, mu, sol.mass_weighted, float(np.min(sol.theta.values)), pairs, sol)


def approximate_mather(gd: GeneralizedDiscount, x0: int, eps_seq: Sequence[float], grid: TorusGrid,
                       cfg: SolverConfig = SolverConfig(), eta_factors: Sequence[float] = (4.0, 2.0, 1.0),
                       target_tol: float = 5e-2, check: bool = True) -> MatherApproximation:
    """Run the (eps, eta) ladder and return the measure at the smallest pair.

    For each eps the viscosities ``eta = c h`` are visited in decreasing
    order; pairings are extrapolated linearly in eta from the two smallest.
    """
    eps_seq = [float(e) for e in eps_seq]
    if any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
        raise ValueError("eps_seq must be strictly decreasing")
    h = grid.spacing
    etas = [c * h for c in eta_factors]
    names = [name for name, _ in test_function_dictionary()]
    steps: list[LadderStep] = []
    rows, gaps_eta = [], []
    prev = None
    for eps in eps_seq:
        per_eta = []
        for eta in etas:
            step = adjoint_step(gd, eps, eta, x0, grid, cfg, initial=prev)
            prev = step.solve.u
            per_eta.append(step)
            steps.append(step)
        a, b = per_eta[-2], per_eta[-1]
        ratio = a.eta / b.eta
        rows.append((ratio * b.pairings - a.pairings) / (ratio - 1.0))
        gaps_eta.append(float(np.max(np.abs(b.pairings - a.pairings))))
    extrap = np.array(rows)
    cauchy = np.max(np.abs(np.diff(extrap, axis=0)), axis=1) if len(rows) > 1 else np.zeros(0)
    if check and cauchy.size and cauchy[-1] > 10.0 * target_tol:
        raise NonConvergence("pairing sequence not Cauchy", float(cauchy[-1]), len(steps))
    finest = steps[-1]
    mu = finest.measure
    phi = GridFunction(grid, np.sin(2 * np.pi * grid.nodes))
    return MatherApproximation(mu, x0, steps, names, extrap, np.array(gaps_eta), cauchy,
                               check_identity_i(mu, gd), check_identity_ii(mu, gd, phi), finest)
