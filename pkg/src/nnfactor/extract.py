"""Rank selection and factor extraction from a regularized low-rank fit.

The fitted matrix concentrates on ``a 1' + B F'``; demeaning over time with
``M_T = I - 11'/T`` isolates the factor part, so the number of factors is
the count of large eigenvalues of the demeaned Gram matrix and the loadings
are its leading eigenvectors. Each family has a compact version of the same
algebra; the zero-pricing-error variant simply skips the demeaning.
"""

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg, problems, solver
from .errors import DegenerateInput, InvalidInput, RankOverflowWarning
from .problems import FamilyKind, ModelFamily, Panel, SemiMatrices


@dataclass(frozen=True)
class LowRankFit:
    """Solver output bundled with the dimensions needed for extraction."""

    family: ModelFamily
    matrix: object  # family-native decision matrix
    lambda_used: float
    report: solver.SolverReport
    n_assets: int
    n_covariates: int

    @property
    def n_periods(self) -> int:
        if self.family.kind is FamilyKind.SEMIPARAMETRIC:
            return self.matrix.diamond.shape[1]
        return self.matrix.shape[1]


def fit_panel(panel: Panel, family: ModelFamily, config: solver.SolverConfig) -> LowRankFit:
    """Solve the regularized problem and wrap the result for extraction."""
    decision, report = solver.solve(panel, family, config)
    return LowRankFit(family=family, matrix=decision, lambda_used=config.lam,
                      report=report, n_assets=panel.n_assets,
                      n_covariates=panel.n_covariates)


@dataclass(frozen=True)
class FactorEstimate:
    """Extracted ``(K, a, B, F)`` in the family's compact parameterization.

    Unconstrained fits fill ``a_hat`` (Np,) and ``b_hat`` (Np, K);
    homogeneous fits fill them with the shared ``(p,)`` intercept and
    ``(p, K)`` loading blocks; semiparametric fits use the split fields
    ``mu_hat``/``phi_hat``/``lambda_hat``/``phi_mat_hat`` instead.
    """

    family: ModelFamily
    n_assets: int
    k_hat: int
    delta_used: float
    f_hat: np.ndarray
    a_hat: np.ndarray | None = None
    b_hat: np.ndarray | None = None
    mu_hat: np.ndarray | None = None
    phi_hat: np.ndarray | None = None
    lambda_hat: np.ndarray | None = None
    phi_mat_hat: np.ndarray | None = None
    warnings: tuple = field(default=())

    @property
    def n_covariates(self) -> int:
        if self.family.kind is FamilyKind.UNCONSTRAINED:
            return self.a_hat.size // self.n_assets
        if self.family.kind is FamilyKind.SEMIPARAMETRIC:
            return self.phi_hat.size + 1
        return self.a_hat.size

    def a_blocks(self) -> np.ndarray:
        """Per-asset intercept coefficients, shape (N, p)."""
        n, p = self.n_assets, self.n_covariates
        if self.family.kind is FamilyKind.UNCONSTRAINED:
            return self.a_hat.reshape(n, p)
        if self.family.kind is FamilyKind.SEMIPARAMETRIC:
            out = np.empty((n, p))
            out[:, 0] = self.mu_hat
            out[:, 1:] = self.phi_hat
            return out
        return np.tile(self.a_hat, (n, 1))

    def b_blocks(self) -> np.ndarray:
        """Per-asset loading coefficients, shape (N, p, K)."""
        n, p = self.n_assets, self.n_covariates
        if self.family.kind is FamilyKind.UNCONSTRAINED:
            return self.b_hat.reshape(n, p, self.k_hat)
        if self.family.kind is FamilyKind.SEMIPARAMETRIC:
            out = np.empty((n, p, self.k_hat))
            out[:, 0, :] = self.lambda_hat
            out[:, 1:, :] = self.phi_mat_hat[None, :, :]
            return out
        return np.tile(self.b_hat, (n, 1, 1))

    def a_stacked(self) -> np.ndarray:
        return self.a_blocks().reshape(-1)

    def b_stacked(self) -> np.ndarray:
        return self.b_blocks().reshape(-1, self.k_hat)


def _demean_columns(A: np.ndarray) -> np.ndarray:
    """Right-multiply by ``M_T``: remove each row's time mean."""
    return A - A.mean(axis=1, keepdims=True)


def _core_matrix(fit: LowRankFit) -> np.ndarray:
    """The matrix whose squared singular values are the selection eigenvalues."""
    if fit.family.kind is FamilyKind.SEMIPARAMETRIC:
        root_n = np.sqrt(fit.n_assets)
        stacked = np.vstack([fit.matrix.diamond, root_n * fit.matrix.star])
    else:
        stacked = np.asarray(fit.matrix, dtype=float)
    if fit.family.zero_alpha:
        return stacked
    return _demean_columns(stacked)


def select_rank(fit: LowRankFit, delta: float) -> int:
    """Count eigenvalues of the family's (demeaned) Gram matrix >= delta."""
    if not delta > 0:
        raise InvalidInput(f"delta must be positive, got {delta}")
    core = _core_matrix(fit)
    if not core.any():
        return 0
    s = np.linalg.svd(core, compute_uv=False)
    return int(np.sum(s * s >= delta))


def default_delta(panel: Panel, family: ModelFamily) -> float:
    """Family-specific default rank threshold."""
    n, t, p = panel.x.shape
    if n < 2:
        raise DegenerateInput("delta defaults need N >= 2 (log N > 0)")
    if family.kind is FamilyKind.HOMOGENEOUS:
        return 2.0 * (p + t) * np.log(n) / np.sqrt(n)
    return 2.0 * (n * p + t) * np.log(n)


def extract_factors(fit: LowRankFit, delta: float | None = None,
                    k: int | None = None) -> FactorEstimate:
    """Extract ``(K, a, B, F)`` under the paper-style normalizations.

    Exactly one of ``delta`` (eigenvalue threshold) or ``k`` (forced rank)
    must be given. Loadings are orthonormalized per family (``B'B/N = I``,
    or ``Phi'Phi = I`` for the homogeneous family), intercepts are projected
    orthogonal to the loadings, and factor columns come out with descending
    demeaned second moments.
    """
    if (delta is None) == (k is None):
        raise InvalidInput("specify exactly one of delta or k")
    core = _core_matrix(fit)
    m_dim, t = core.shape
    if k is None:
        k_hat = select_rank(fit, delta)
        delta_used = float(delta)
    else:
        if not 0 <= k <= min(m_dim, t):
            raise InvalidInput(f"forced rank k = {k} out of range")
        k_hat = int(k)
        delta_used = float("nan")

    warn_msgs = ()
    if k_hat >= min(m_dim, t) - 1 and k_hat > 0:
        msg = (f"selected rank {k_hat} is at the theoretical ceiling "
               f"min({m_dim}, {t}) - 1; estimates kept but unreliable")
        _warnings.warn(msg, RankOverflowWarning)
        warn_msgs = (msg,)

    n = fit.n_assets
    fam = fit.family

    if k_hat == 0:
        w = np.zeros((m_dim, 0))
    else:
        dec = linalg.svd(core)
        w = dec.left_vectors[:, :k_hat]

    if fam.kind is FamilyKind.SEMIPARAMETRIC:
        diamond, star = fit.matrix
        root_n = np.sqrt(n)
        lam_hat = root_n * w[:n]
        phi_mat = w[n:]
        m_vec = diamond.mean(axis=1)
        q_vec = star.mean(axis=1)
        if fam.zero_alpha:
            mu = np.zeros(n)
            phi = np.zeros(star.shape[0])
        elif k_hat == 0:
            mu, phi = m_vec, q_vec
        else:
            mu = m_vec - lam_hat @ (lam_hat.T @ m_vec) / n - lam_hat @ (phi_mat.T @ q_vec)
            phi = q_vec - phi_mat @ (phi_mat.T @ q_vec) - phi_mat @ (lam_hat.T @ m_vec) / n
        f_hat = diamond.T @ lam_hat / n + star.T @ phi_mat
        return FactorEstimate(family=fam, n_assets=n, k_hat=k_hat,
                              delta_used=delta_used, f_hat=f_hat,
                              mu_hat=mu, phi_hat=phi, lambda_hat=lam_hat,
                              phi_mat_hat=phi_mat, warnings=warn_msgs)

    pi = np.asarray(fit.matrix, dtype=float)
    row_means = pi.mean(axis=1)
    if fam.kind is FamilyKind.UNCONSTRAINED:
        b_hat = np.sqrt(n) * w
        f_hat = pi.T @ b_hat / n
        if fam.zero_alpha:
            a_hat = np.zeros(m_dim)
        elif k_hat == 0:
            a_hat = row_means
        else:
            a_hat = row_means - b_hat @ (b_hat.T @ row_means) / n
    else:  # homogeneous reduced problem, loadings kept orthonormal
        b_hat = w
        f_hat = pi.T @ b_hat
        if fam.zero_alpha:
            a_hat = np.zeros(m_dim)
        elif k_hat == 0:
            a_hat = row_means
        else:
            a_hat = row_means - b_hat @ (b_hat.T @ row_means)
    return FactorEstimate(family=fam, n_assets=n, k_hat=k_hat,
                          delta_used=delta_used, f_hat=f_hat,
                          a_hat=a_hat, b_hat=b_hat, warnings=warn_msgs)


def rotation_align(f_true: np.ndarray, f_est: np.ndarray,
                   zero_alpha: bool = False, cond_limit: float = 1e12) -> np.ndarray:
    """Rotation ``H`` aligning estimated factors with the truth.

    ``H = (F' M_T Fhat)(Fhat' M_T Fhat)^{-1}``; evaluation errors are then
    ``||Bhat - B H||`` and ``||Fhat - F (H')^{-1}||``. The zero-alpha
    variant drops the demeaning.
    """
    f_true = np.asarray(f_true, dtype=float)
    f_est = np.asarray(f_est, dtype=float)
    if f_est.ndim != 2 or f_est.shape[1] < 1:
        raise InvalidInput("estimated factor matrix must have at least one column")
    if f_true.shape[0] != f_est.shape[0]:
        raise InvalidInput("factor matrices must share the period dimension")
    if zero_alpha:
        ft, fe = f_true, f_est
    else:
        ft = f_true - f_true.mean(axis=0, keepdims=True)
        fe = f_est - f_est.mean(axis=0, keepdims=True)
    gram = fe.T @ fe
    if np.linalg.cond(gram) > cond_limit:
        raise DegenerateInput("estimated factor Gram matrix is numerically singular")
    return np.linalg.solve(gram.T, (ft.T @ fe).T).T
