"""Sparse symmetric positive definite factorization with a cached ordering.

SuperLU is run with diagonal pivoting only, on a matrix permuted by a
fill-reducing ordering that is computed once per sparsity pattern. For a
symmetric matrix, a factorization that needed no off-diagonal pivot and has a
positive diagonal in ``U`` is an ``L D L^T`` factorization with ``D > 0``,
which certifies positive definiteness the same way a Cholesky attempt does.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

logger = logging.getLogger(__name__)


class SPDFactor:
    """Factorization of a permuted SPD matrix; call it to solve ``A x = b``."""

    def __init__(self, lu, perm: np.ndarray):
        self._lu = lu
        self._perm = perm

    def __call__(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, float)
        x = np.empty_like(b)
        x[self._perm] = self._lu.solve(b[self._perm])
        return x


class CholeskySolver:
    """Positive definiteness test plus solve, reusing a fill-reducing ordering.

    The ordering is recomputed only when the sparsity pattern (shape and
    number of stored entries) changes.
    """

    def __init__(self):
        self._key = None
        self._perm = None

    def _ordering(self, A: sparse.csc_matrix) -> np.ndarray:
        key = (A.shape, A.nnz)
        if key != self._key:
            pattern = A.copy()
            pattern.data = np.abs(pattern.data) + 1.0
            pattern = pattern + sparse.identity(A.shape[0], format="csc") * (
                abs(pattern).sum(axis=1).max() + 1.0)
            lu = splu(pattern.tocsc(), permc_spec="MMD_AT_PLUS_A",
                      diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
            # perm_c maps new to old positions; rows of A[p] need its inverse
            self._perm = np.argsort(lu.perm_c)
            self._key = key
        return self._perm

    def factor(self, A) -> SPDFactor | None:
        """Factor ``A`` if it is numerically positive definite, else return ``None``."""
        A = sparse.csc_matrix(A)
        A.sum_duplicates()
        n = A.shape[0]
        if n == 0:
            return SPDFactor(None, np.arange(0))
        p = self._ordering(A)
        B = A[p][:, p].tocsc()
        try:
            lu = splu(B, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                      options=dict(SymmetricMode=True))
        except RuntimeError:
            return None
        if not (np.array_equal(lu.perm_r, np.arange(n)) and np.array_equal(lu.perm_c, np.arange(n))):
            return None
        d = lu.U.diagonal()
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            return None
        return SPDFactor(lu, p)


def shifted_cholesky(H, solver: CholeskySolver, beta: float = 1e-3, tau_plus: float = 10.0,
                     max_tries: int = 60):
    """Factor ``H + tau I`` for the smallest tau in the shifting sequence that succeeds.

    ``tau`` starts at 0 if the diagonal of ``H`` is positive and at
    ``beta - min diag`` otherwise; after each failure it becomes
    ``max(tau_plus * tau, beta)``.

    Returns
    -------
    factor : SPDFactor
    tau : float
    """
    H = sparse.csc_matrix(H)
    n = H.shape[0]
    dmin = H.diagonal().min() if n else 1.0
    tau = 0.0 if dmin > 0 else beta - dmin
    eye = sparse.identity(n, format="csc")
    for _ in range(max_tries):
        f = solver.factor(H + tau * eye if tau > 0 else H)
        if f is not None:
            return f, tau
        tau = max(tau_plus * tau, beta)
    raise np.linalg.LinAlgError("no positive definite shift found")
