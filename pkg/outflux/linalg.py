"""Sparse direct solves with scipy failures mapped to outflux exceptions."""

from __future__ import annotations

import logging
import warnings

import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from outflux.exceptions import SingularSystemError

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]


def solve_sparse(matrix: sparse.spmatrix, rhs: FloatArray, context: str) -> FloatArray:
    """Direct solve of matrix @ x = rhs.

    Args:
        matrix: Square sparse matrix
        rhs: Right-hand side
        context: Parameters named in the error message (for example "nu=1, lambda=0.5, h=0.25")

    Returns:
        Solution vector

    Raises:
        SingularSystemError: If the matrix is singular or the solution is not finite
    """
    if rhs.size == 0:
        return np.zeros(0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = spsolve(sparse.csc_matrix(matrix), rhs)
        except (MatrixRankWarning, RuntimeError) as e:
            logger.error(f"Sparse solve failed ({context}): {e}")
            raise SingularSystemError(f"singular system ({context}): {e}") from e
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(f"non-finite solution ({context})")
    return x


def saddle_matrix(
    K: sparse.spmatrix, B: sparse.spmatrix, mean: FloatArray
) -> sparse.csr_matrix:
    """[[K, B^T, 0], [B, 0, m], [0, m^T, 0]] for a constraint fixed up to constants."""
    m = sparse.csr_matrix(mean.reshape(-1, 1))
    n_p = B.shape[0]
    return sparse.bmat(
        [
            [K, B.T, None],
            [B, sparse.csr_matrix((n_p, n_p)), m],
            [None, m.T, sparse.csr_matrix((1, 1))],
        ],
        format="csr",
    )
