"""Shared fixtures and oracle helpers for the test suite."""

import numpy as np
import pytest
import scipy.sparse as sp

from krymat.blockmat import BlockRow


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def stable_dense(n, rng, spread=1.0):
    """Dense random matrix shifted to have all eigenvalues in the left half plane."""
    a = spread * rng.standard_normal((n, n))
    shift = np.abs(np.linalg.eigvals(a).real).max() + 0.5
    return a - shift * np.eye(n)


def stable_sym(n, rng, lo=0.5, hi=20.0):
    """Symmetric matrix with eigenvalues in [-hi, -lo]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = -rng.uniform(lo, hi, n)
    a = q @ np.diag(lam) @ q.T
    return 0.5 * (a + a.T)


def stable_sparse(n, rng, density=0.1):
    """Sparse random matrix made stable and nonsingular by diagonal dominance."""
    nnz = max(n, int(density * n * n))
    rows = rng.integers(0, n, nnz)
    cols = rng.integers(0, n, nnz)
    vals = rng.standard_normal(nnz)
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    row_sums = np.asarray(np.abs(a).sum(axis=1)).ravel()
    return (a - sp.diags(row_sums + 0.5)).tocsr()


def random_block_row(rng, n, m, width, scale=1.0):
    return BlockRow(scale * rng.standard_normal((n, m * width)), width)


def explicit_kron_apply(vb, s_mat):
    """Reference for kron_apply: materialize the Kronecker product."""
    return vb.data @ np.kron(s_mat, np.eye(vb.width))
