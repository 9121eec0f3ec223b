"""Potentials, kinetic profiles, Hamiltonians and generalized discount pairs.

A Hamiltonian ``H`` is evaluated two ways:

* ``H.full(x, p)`` takes the full momentum ``p``;
* ``H(x, q)`` takes the slope ``q`` of the unknown and folds in the fixed
  momentum ``P`` as ``H.full(x, P + q)``.  All solvers use the second form.

Everything here is immutable and picklable so models can be shipped to
worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .grid import TorusGrid

EXP_CLAMP = 60.0


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------


class Potential:
    """Continuous 1-periodic potential ``V``."""

    def __call__(self, x):
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        return np.zeros(0)

    def sample(self, grid: TorusGrid) -> np.ndarray:
        return np.asarray(self(grid.nodes), dtype=float)

    def dense_values(self, grid: Optional[TorusGrid] = None) -> np.ndarray:
        pts = self.breakpoints()
        if grid is not None:
            pts = np.concatenate([grid.nodes, pts])
        else:
            pts = np.concatenate([np.linspace(0.0, 1.0, 4097)[:-1], pts])
        return np.asarray(self(pts), dtype=float)

    @property
    def max(self) -> float:
        return float(np.max(self.dense_values()))

    @property
    def min(self) -> float:
        return float(np.min(self.dense_values()))


@dataclass(frozen=True)
class ZeroPotential(Potential):
    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TriangularBump(Potential):
    """Tent of half-width ``s`` starting at 0: rises on [0, s], falls on [s, 2s].

    With ``height=None`` the peak value is ``s`` itself and ``s`` must lie in
    (0, 1/4).  A scaled tent (peak ``height``) only needs its support [0, 2s]
    to fit inside the circle, i.e. ``s`` in (0, 1/2).
    """

    s: float
    height: Optional[float] = None

    def __post_init__(self):
        upper = 0.25 if self.height is None else 0.5
        if not (0.0 < self.s < upper):
            raise ConfigError(f"TriangularBump: s={self.s} outside (0, {upper})")
        if self.height is not None and self.height < 0:
            raise ConfigError("TriangularBump: negative height")

    @property
    def peak(self) -> float:
        return self.s if self.height is None else float(self.height)

    def __call__(self, x):
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        tent = np.where(x <= self.s, x, 2.0 * self.s - x)
        tent = np.where(x >= 2.0 * self.s, 0.0, tent)
        return tent * (self.peak / self.s)

    def breakpoints(self):
        return np.array([0.0, self.s, 2.0 * self.s])


@dataclass(frozen=True, eq=False)
class SampledPotential(Potential):
    """Values at ``i/n`` with periodic piecewise-linear interpolation."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2 or not all(np.isfinite(vals)):
            raise ConfigError("SampledPotential needs at least two finite values")
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        v = np.asarray(self.values)
        n = v.size
        xp = np.arange(n + 1) / n
        return np.interp(x, xp, np.append(v, v[0]))

    def breakpoints(self):
        return np.arange(len(self.values)) / len(self.values)


def eval_potential(V: Potential, x):
    """Evaluate ``V`` at ``x`` (reduced mod 1)."""
    out = V(x)
    return float(out) if np.ndim(out) == 0 else out


def oscillation(V: Potential, grid: Optional[TorusGrid] = None) -> float:
    """``max V - min V`` over grid nodes (or a dense sample) plus breakpoints."""
    vals = V.dense_values(grid)
    return float(np.max(vals) - np.min(vals))


# --------------------------------------------------------------------------
# kinetic profiles
# --------------------------------------------------------------------------


class Kinetic:
    """Scalar profile ``k(p)``; ``critical_points`` lists every local extremum."""

    critical_points: tuple = ()

    def value(self, p):
        raise NotImplementedError

    def derivative(self, p):
        raise NotImplementedError


@dataclass(frozen=True)
class DoubleWellKinetic(Kinetic):
    """``(p^2 - 1)^2``: wells of depth 1 at p = +-1."""

    critical_points: tuple = (-1.0, 0.0, 1.0)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return (p * p - 1.0) ** 2

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        return 4.0 * p * (p * p - 1.0)


@dataclass(frozen=True)
class FlatKinetic(Kinetic):
    """``F(|p|)`` with F(q)=q on [0,1], 1 on [1,2], q-1 beyond 2."""

    critical_points: tuple = (0.0,)

    @staticmethod
    def profile(q):
        q = np.asarray(q, dtype=float)
        return np.where(q <= 1.0, q, np.where(q <= 2.0, 1.0, q - 1.0))

    def value(self, p):
        return self.profile(np.abs(np.asarray(p, dtype=float)))

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        q = np.abs(p)
        # right derivative of F at its corners
        slope = np.where((q >= 1.0) & (q < 2.0), 0.0, 1.0)
        return np.sign(p) * slope


@dataclass(frozen=True)
class PolynomialKinetic(Kinetic):
    """``sum_k c_k p^k`` (coefficients in increasing degree)."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) < 3 or c[-1] <= 0 or (len(c) - 1) % 2:
            raise ConfigError("PolynomialKinetic needs even degree >= 2 with positive leading coefficient")
        object.__setattr__(self, "coeffs", c)
        roots = np.polynomial.polynomial.polyroots(np.polynomial.polynomial.polyder(c))
        real = sorted({round(float(r.real), 14) for r in roots if abs(r.imag) < 1e-10})
        object.__setattr__(self, "critical_points", tuple(real))

    def value(self, p):
        return np.polynomial.polynomial.polyval(np.asarray(p, dtype=float), self.coeffs)

    def derivative(self, p):
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(np.asarray(p, dtype=float), d)


@dataclass(frozen=True)
class RadialKinetic(Kinetic):
    """``K(|p|)`` for a polynomial K with K'(0)=0, K''(0)>0 and K'>0 on (0, inf)."""

    coeffs: tuple
    critical_points: tuple = (0.0,)

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        object.__setattr__(self, "coeffs", c)
        if len(c) < 3 or c[1] != 0.0 or c[2] <= 0.0:
            raise ConfigError("RadialKinetic requires K'(0)=0 and K''(0)>0")
        q = np.linspace(1e-6, 50.0, 20001)
        if np.any(self._dK(q) <= 0.0):
            raise ConfigError("RadialKinetic requires K' > 0 on (0, inf)")

    def _K(self, q):
        return np.polynomial.polynomial.polyval(q, self.coeffs)

    def _dK(self, q):
        return np.polynomial.polynomial.polyval(q, np.polynomial.polynomial.polyder(self.coeffs))

    def _d2K(self, q):
        return np.polynomial.polynomial.polyval(q, np.polynomial.polynomial.polyder(self.coeffs, 2))

    def value(self, p):
        return self._K(np.abs(np.asarray(p, dtype=float)))

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        return np.sign(p) * self._dK(np.abs(p))

    def second_derivative(self, p):
        return self._d2K(np.abs(np.asarray(p, dtype=float)))


@dataclass(frozen=True)
class CallableKinetic(Kinetic):
    """Kinetic profile from user callables (module-level for picklability)."""

    fn: Callable
    dfn: Optional[Callable] = None
    critical_points: tuple = ()

    def value(self, p):
        return np.asarray(self.fn(np.asarray(p, dtype=float)), dtype=float)

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        if self.dfn is not None:
            return np.asarray(self.dfn(p), dtype=float)
        step = 1e-6
        return (self.value(p + step) - self.value(p - step)) / (2 * step)


# --------------------------------------------------------------------------
# Hamiltonians
# --------------------------------------------------------------------------


class Hamiltonian:
    """Interface shared by all Hamiltonian variants."""

    P: float = 0.0
    family: str = "custom"

    def full(self, x, p):
        raise NotImplementedError

    def dp_full(self, x, p):
        raise NotImplementedError

    @property
    def critical_momenta(self) -> tuple:
        return ()

    def __call__(self, x, q):
        return self.full(x, self.P + np.asarray(q, dtype=float))

    def dp(self, x, q):
        return self.dp_full(x, self.P + np.asarray(q, dtype=float))

    @property
    def critical_slopes(self) -> tuple:
        return tuple(c - self.P for c in self.critical_momenta)


@dataclass(frozen=True)
class HamiltonianModel(Hamiltonian):
    """Separable ``k(p) + sign * V(x) - offset``."""

    kinetic: Kinetic
    potential: Potential = field(default_factory=ZeroPotential)
    P: float = 0.0
    potential_sign: int = -1
    offset: float = 0.0
    family: str = "custom"

    def full(self, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return self.kinetic.value(p) + self.potential_sign * self.potential(x) - self.offset

    def dp_full(self, x, p):
        return self.kinetic.derivative(np.asarray(p, dtype=float)) + 0.0 * np.asarray(x, dtype=float)

    @property
    def critical_momenta(self):
        return tuple(self.kinetic.critical_points)

    def with_offset(self, c: float) -> "HamiltonianModel":
        """Same model with the constant ``c`` subtracted (``H - c``)."""
        return HamiltonianModel(self.kinetic, self.potential, self.P, self.potential_sign,
                                self.offset + c, self.family)

    def with_P(self, P: float) -> "HamiltonianModel":
        return HamiltonianModel(self.kinetic, self.potential, float(P), self.potential_sign,
                                self.offset, self.family)


@dataclass(frozen=True)
class CustomHamiltonian(Hamiltonian):
    """Arbitrary ``H(x, p)`` from a vectorized evaluator.

    ``critical_momenta`` must list every p at which ``p -> H(x, p)`` can have
    an interior extremum; the Godunov flux relies on it.
    """

    evaluator: Callable
    derivative: Optional[Callable] = None
    momenta: tuple = ()
    P: float = 0.0
    family: str = "custom"

    def full(self, x, p):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float), np.asarray(p, dtype=float)), dtype=float)

    def dp_full(self, x, p):
        if self.derivative is not None:
            return np.asarray(self.derivative(np.asarray(x, dtype=float), np.asarray(p, dtype=float)))
        step = 1e-6
        p = np.asarray(p, dtype=float)
        return (self.full(x, p + step) - self.full(x, p - step)) / (2 * step)

    @property
    def critical_momenta(self):
        return tuple(self.momenta)


def double_well(P: float = 0.0, V: Optional[Potential] = None) -> HamiltonianModel:
    """``(|p + P|^2 - 1)^2 - V(x)``."""
    return HamiltonianModel(DoubleWellKinetic(), V or ZeroPotential(), float(P), -1, 0.0, "double_well")


def flat_quasiconvex(V: Optional[Potential] = None, P: float = 1.5) -> HamiltonianModel:
    """``F(|p + P|) - V(x)`` with the flat-plateau profile F."""
    return HamiltonianModel(FlatKinetic(), V or ZeroPotential(), float(P), -1, 0.0, "flat")


def smooth_quasiconvex(coeffs: Sequence[float] = (0.0, 0.0, 0.5, 0.0, 0.25),
                       V: Optional[Potential] = None, P: float = 0.0) -> HamiltonianModel:
    """``K(|p + P|) + V(x)`` with polynomial K; default K(q) = q^2/2 + q^4/4."""
    return HamiltonianModel(RadialKinetic(tuple(coeffs)), V or ZeroPotential(), float(P), +1, 0.0, "smooth")


def multiwell(kinetic: Kinetic, V: Optional[Potential] = None, P: float = 0.0) -> HamiltonianModel:
    """``F(p + P) - V(x)`` for a kinetic profile with several wells."""
    return HamiltonianModel(kinetic, V or ZeroPotential(), float(P), -1, 0.0, "multiwell")


def eval_hamiltonian(H: Hamiltonian, x, p):
    """``H`` at full momentum ``p`` (no ``P`` shift)."""
    out = H.full(x, p)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# generalized discount pairs (f, G)
# --------------------------------------------------------------------------


class GeneralizedDiscount:
    """Pair ``(f, G)`` for ``f(x, eps v) + G(x, Dv) = 0``.

    ``G`` takes the slope of ``v``; ``f`` must be strictly increasing in r.
    ``convex`` is True/False when G's convexity in p is known, else None.
    """

    lambda0: Optional[float] = None
    convex: Optional[bool] = None
    label: str = "generalized"

    def f(self, x, r):
        raise NotImplementedError

    def f_r(self, x, r):
        raise NotImplementedError

    def G(self, x, q):
        raise NotImplementedError

    def dG(self, x, q):
        step = 1e-7
        q = np.asarray(q, dtype=float)
        return (self.G(x, q + step) - self.G(x, q - step)) / (2 * step)

    @property
    def critical_slopes(self) -> tuple:
        return ()

    def f_r0(self, x):
        x = np.asarray(x, dtype=float)
        return self.f_r(x, np.zeros_like(x))

    def smoothed_dG(self, x, q, width: float):
        """Centred difference quotient of G with half-width ``width``.

        Used wherever D_pG is needed at slopes that may sit on a corner of G.
        """
        q = np.asarray(q, dtype=float)
        return (self.G(x, q + width) - self.G(x, q - width)) / (2.0 * width)

    def initial_constant(self, x0: float = 0.0) -> float:
        """Root r of ``f(x0, r) + G(x0, 0) = 0`` (constant-solution guess for eps*v)."""
        from scipy.optimize import brentq

        g0 = float(self.G(x0, 0.0))

        def phi(r):
            return float(self.f(x0, r)) + g0

        mags = 2.0 ** np.arange(-12, 13)
        grid_r = np.concatenate([-mags[::-1], [0.0], mags])
        vals = np.array([phi(r) for r in grid_r])
        for k in range(grid_r.size - 1):
            a, b = vals[k], vals[k + 1]
            if np.isfinite(a) and np.isfinite(b) and a <= 0.0 <= b:
                return float(brentq(phi, grid_r[k], grid_r[k + 1], xtol=1e-15))
        finite = np.isfinite(vals)
        return float(grid_r[finite][np.argmin(np.abs(vals[finite]))])


@dataclass(frozen=True)
class CallableDiscount(GeneralizedDiscount):
    """Pair built from user callables ``f(x, r)``, ``f_r(x, r)``, ``G(x, q)``."""

    f_fn: Callable
    f_r_fn: Callable
    G_fn: Callable
    dG_fn: Optional[Callable] = None
    slopes: tuple = ()
    lambda0: Optional[float] = None
    convex: Optional[bool] = None
    label: str = "callable"

    def f(self, x, r):
        return np.asarray(self.f_fn(np.asarray(x, dtype=float), np.asarray(r, dtype=float)), dtype=float)

    def f_r(self, x, r):
        return np.asarray(self.f_r_fn(np.asarray(x, dtype=float), np.asarray(r, dtype=float)), dtype=float)

    def G(self, x, q):
        return np.asarray(self.G_fn(np.asarray(x, dtype=float), np.asarray(q, dtype=float)), dtype=float)

    def dG(self, x, q):
        if self.dG_fn is None:
            return super().dG(x, q)
        return np.asarray(self.dG_fn(np.asarray(x, dtype=float), np.asarray(q, dtype=float)), dtype=float)

    @property
    def critical_slopes(self):
        return tuple(self.slopes)


@dataclass(frozen=True)
class LinearDiscount(GeneralizedDiscount):
    """``f(x, r) = r - hbar``, ``G = H``: the plain discounted problem, normalized.

    With ``hbar`` the ergodic constant, the solution is ``v = u + hbar/eps``.
    """

    H: Hamiltonian
    hbar: float = 0.0
    label: str = "linear"

    @property
    def convex(self):
        return None

    def f(self, x, r):
        return np.asarray(r, dtype=float) - self.hbar + 0.0 * np.asarray(x, dtype=float)

    def f_r(self, x, r):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(r)).shape)

    def G(self, x, q):
        return self.H(x, q)

    def dG(self, x, q):
        return self.H.dp(x, q)

    @property
    def critical_slopes(self):
        return self.H.critical_slopes


@dataclass(frozen=True)
class ExponentialDiscount(GeneralizedDiscount):
    """``f(r) = -exp(-lambda0 r)``, ``G = exp(lambda0 (H - hbar))`` (exponent clamped)."""

    H: Hamiltonian
    lambda0: float = 1.0
    hbar: float = 0.0
    convex: Optional[bool] = None
    label: str = "exponential"

    def f(self, x, r):
        r = np.asarray(r, dtype=float) + 0.0 * np.asarray(x, dtype=float)
        return -np.exp(np.clip(-self.lambda0 * r, -EXP_CLAMP, EXP_CLAMP))

    def f_r(self, x, r):
        return -self.lambda0 * self.f(x, r)

    def G(self, x, q):
        return np.exp(np.clip(self.lambda0 * (self.H(x, q) - self.hbar), -EXP_CLAMP, EXP_CLAMP))

    def dG(self, x, q):
        return self.lambda0 * self.H.dp(x, q) * self.G(x, q)

    @property
    def critical_slopes(self):
        return self.H.critical_slopes


@dataclass(frozen=True)
class DoubleWellCaseDiscount(GeneralizedDiscount):
    """Double-well equation rewritten on one branch of the well.

    ``f(x, r) = -sqrt(V(x) + hbar - r)`` and ``G(x, q) = 1 - |P+q|^2`` on the
    inner branch (case "a", concave) or ``|P+q|^2 - 1`` on the outer branch
    (case "b", convex).  ``f`` is NaN where the radicand is negative.
    """

    P: float
    hbar: float
    potential: Potential
    case: str
    label: str = "double_well_case"

    def __post_init__(self):
        if self.case not in ("a", "b"):
            raise ConfigError("case must be 'a' or 'b'")

    @property
    def convex(self):
        return self.case == "b"

    @property
    def concave(self):
        return self.case == "a"

    def radicand(self, x, r):
        return self.potential(np.asarray(x, dtype=float)) + self.hbar - np.asarray(r, dtype=float)

    def f(self, x, r):
        rad = self.radicand(x, r)
        with np.errstate(invalid="ignore"):
            return np.where(rad >= 0.0, -np.sqrt(np.maximum(rad, 0.0)), np.nan)

    def f_r(self, x, r):
        rad = self.radicand(x, r)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(rad > 0.0, 0.5 / np.sqrt(np.maximum(rad, 1e-300)), np.nan)

    def G(self, x, q):
        p = self.P + np.asarray(q, dtype=float) + 0.0 * np.asarray(x, dtype=float)
        g = p * p - 1.0
        return -g if self.case == "a" else g

    def dG(self, x, q):
        p = self.P + np.asarray(q, dtype=float) + 0.0 * np.asarray(x, dtype=float)
        return -2.0 * p if self.case == "a" else 2.0 * p

    @property
    def critical_slopes(self):
        return (-self.P,)


def midpoint_convexity_defect(gd: GeneralizedDiscount, n_samples: int = 1000,
                              p_range: float = 3.0, seed: int = 0) -> float:
    """Largest relative violation of G(x,(p1+p2)/2) <= (G(x,p1)+G(x,p2))/2."""
    rng = np.random.default_rng(seed)
    x = rng.random(n_samples)
    p1 = rng.uniform(-p_range, p_range, n_samples)
    p2 = rng.uniform(-p_range, p_range, n_samples)
    mid = gd.G(x, 0.5 * (p1 + p2))
    avg = 0.5 * (gd.G(x, p1) + gd.G(x, p2))
    scale = 1.0 + np.abs(avg)
    return float(np.max((mid - avg) / scale))
