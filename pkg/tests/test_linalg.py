import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjselect.errors import LinearSolveFailure
from hjselect.linalg import CyclicTridiagonal, solve_cyclic_tridiagonal


def random_dominant(n, seed):
    rng = np.random.default_rng(seed)
    lo, up = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    diag = np.abs(lo) + np.abs(up) + rng.uniform(0.1, 2.0, n)
    return CyclicTridiagonal(lo, diag, up)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=3, max_value=60), st.integers(min_value=0, max_value=10_000))
def test_matches_dense_solve(n, seed):
    A = random_dominant(n, seed)
    rhs = np.random.default_rng(seed + 1).normal(size=n)
    x = A.solve(rhs)
    np.testing.assert_allclose(x, np.linalg.solve(A.dense(), rhs), rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=3, max_value=40), st.integers(min_value=0, max_value=10_000))
def test_transpose_products(n, seed):
    A = random_dominant(n, seed)
    y = np.random.default_rng(seed).normal(size=n)
    np.testing.assert_allclose(A.rmatvec(y), A.dense().T @ y, atol=1e-13)
    np.testing.assert_allclose(A.transpose().dense(), A.dense().T)


def test_row_sums():
    A = random_dominant(10, 3)
    np.testing.assert_allclose(A.row_sums(), A.dense().sum(axis=1))


def test_tiny_system_rejected():
    with pytest.raises(LinearSolveFailure):
        solve_cyclic_tridiagonal(np.ones(2), np.ones(2), np.ones(2), np.ones(2))


def test_singular_system_reported():
    n = 8
    A = CyclicTridiagonal(-np.ones(n), 2 * np.ones(n), -np.ones(n))  # periodic Laplacian, constant kernel
    with pytest.raises(LinearSolveFailure):
        A.solve(np.ones(n))
