"""Dense decompositions and the nuclear-norm toolbox.

Everything here is pure: no caching, no state, safe to call from worker
processes. Vectors carry a deterministic sign so that repeated runs (and
different LAPACK drivers) produce identical factor estimates.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

# Singular triplets with thresholded value at or below this are dropped
# outright so that downstream rank counts are exact.
RANK_EPS = 1e-12


@dataclass(frozen=True)
class Svd:
    """Thin SVD ``A = U diag(s) V'`` with descending singular values."""

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    @property
    def rank(self) -> int:
        return int(np.sum(self.singular_values > RANK_EPS))

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


@dataclass(frozen=True)
class EigTopK:
    """Largest-k eigenpairs of a symmetric matrix, eigenvalues descending."""

    values: np.ndarray
    vectors: np.ndarray


def _fix_signs(left: np.ndarray, right: np.ndarray | None = None):
    """Flip vector pairs so each left vector's largest-|entry| is positive.

    Ties break toward the lowest row index (argmax semantics). Operates on
    copies; returns the adjusted arrays.
    """
    left = left.copy()
    right = None if right is None else right.copy()
    for j in range(left.shape[1]):
        col = left[:, j]
        if col.size == 0:
            continue
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            left[:, j] = -col
            if right is not None:
                right[:, j] = -right[:, j]
    return left, right


def svd(A: np.ndarray) -> Svd:
    """Thin SVD with the package-wide deterministic sign convention."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidInput(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix contains non-finite entries")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    U, V = _fix_signs(U, Vt.T)
    return Svd(left_vectors=U, singular_values=s, right_vectors=V)


def soft_threshold_singular(A: np.ndarray, x: float) -> np.ndarray:
    """Soft-threshold the singular values of ``A`` by ``x``.

    Returns ``U diag(max(0, s - x)) V'``, the proximal operator of
    ``x * ||.||_*`` evaluated at ``A``. Triplets whose thresholded value is
    below ``RANK_EPS`` are dropped so the result's rank is exact.
    """
    if not x > 0:
        raise InvalidInput(f"threshold must be positive, got {x}")
    dec = svd(A)
    shrunk = dec.singular_values - x
    keep = shrunk > RANK_EPS
    if not np.any(keep):
        return np.zeros_like(np.asarray(A, dtype=float))
    U = dec.left_vectors[:, keep]
    V = dec.right_vectors[:, keep]
    return (U * shrunk[keep]) @ V.T


def nuclear_norm(A: np.ndarray) -> float:
    """Sum of singular values."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix contains non-finite entries")
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def operator_norm(A: np.ndarray) -> float:
    """Largest singular value."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix contains non-finite entries")
    if min(A.shape) == 0 or not A.any():
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def eig_top_k(S: np.ndarray, k: int, symmetry_tol: float = 1e-10) -> EigTopK:
    """Largest-k eigenpairs of a symmetric matrix.

    The input must be symmetric within ``symmetry_tol`` (relative to its
    magnitude). Eigenvalue ties keep the backend's order after the stable
    descending sort.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInput("matrix contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > symmetry_tol * scale:
        raise InvalidInput("matrix is not symmetric within tolerance")
    if not 0 <= k <= S.shape[0]:
        raise InvalidInput(f"k = {k} out of range for {S.shape[0]}x{S.shape[0]} matrix")
    vals, vecs = np.linalg.eigh((S + S.T) / 2.0)
    order = np.argsort(-vals, kind="stable")[:k]
    vecs, _ = _fix_signs(vecs[:, order])
    return EigTopK(values=vals[order], vectors=vecs)
