"""Periodic (cyclic) tridiagonal systems.

Row ``i`` of the operator reads
``lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1]`` with indices mod n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import LinearSolveFailure


@dataclass(frozen=True, eq=False)
class CyclicTridiagonal:
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.lower * np.roll(x, 1) + self.diag * x + self.upper * np.roll(x, -1)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """Transpose product ``A^T y``."""
        return np.roll(self.lower * y, -1) + self.diag * y + np.roll(self.upper * y, 1)

    def transpose(self) -> "CyclicTridiagonal":
        # (A^T)[i, i-1] = A[i-1, i] = upper[i-1];  (A^T)[i, i+1] = A[i+1, i] = lower[i+1]
        return CyclicTridiagonal(np.roll(self.upper, 1), self.diag.copy(), np.roll(self.lower, -1))

    def row_sums(self) -> np.ndarray:
        return self.lower + self.diag + self.upper

    def dense(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n))
        idx = np.arange(n)
        A[idx, idx] += self.diag
        A[idx, (idx - 1) % n] += self.lower
        A[idx, (idx + 1) % n] += self.upper
        return A

    def solve(self, rhs: np.ndarray, refine: int = 1) -> np.ndarray:
        x = solve_cyclic_tridiagonal(self.lower, self.diag, self.upper, rhs)
        for _ in range(refine):
            r = rhs - self.matvec(x)
            x = x + solve_cyclic_tridiagonal(self.lower, self.diag, self.upper, r)
        return x


def solve_cyclic_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Sherman-Morrison reduction of the cyclic system to two banded solves."""
    a = np.asarray(lower, dtype=float)
    b = np.asarray(diag, dtype=float)
    c = np.asarray(upper, dtype=float)
    d = np.asarray(rhs, dtype=float)
    n = b.size
    if n < 3:
        raise LinearSolveFailure("cyclic tridiagonal system needs n >= 3")
    # A = T + w z^T with w = (gamma, 0, ..., 0, c[n-1]),  z = (1, 0, ..., 0, a[0]/gamma)
    gamma = -b[0] if b[0] != 0.0 else -1.0
    bb = b.copy()
    bb[0] -= gamma
    bb[-1] -= c[-1] * a[0] / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = c[:-1]
    ab[1] = bb
    ab[2, :-1] = a[1:]
    w = np.zeros(n)
    w[0] = gamma
    w[-1] = c[-1]
    try:
        sol = solve_banded((1, 1), ab, np.column_stack([d, w]), check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolveFailure(str(exc)) from exc
    y, q = sol[:, 0], sol[:, 1]
    zy = y[0] + a[0] / gamma * y[-1]
    zq = q[0] + a[0] / gamma * q[-1]
    denom = 1.0 + zq
    if denom == 0.0 or not np.isfinite(denom):
        raise LinearSolveFailure("Sherman-Morrison denominator vanished")
    x = y - q * (zy / denom)
    if not np.all(np.isfinite(x)):
        raise LinearSolveFailure("non-finite solution")
    return x
