"""Panel container, model families, and the three smooth loss functions.

A decision matrix is family-native:

* unconstrained -- one ``(N*p, T)`` array, row block ``i`` holding the
  per-asset coefficient path ``gamma_it``;
* semiparametric -- a :class:`SemiMatrices` pair ``(diamond, star)`` of
  shapes ``(N, T)`` and ``(p-1, T)``, both on the original covariate scale
  (the sqrt(N) rescaling of the reduced problem is internal);
* homogeneous -- one ``(p, T)`` array of per-period coefficients.

Loss, gradient and the Lipschitz constants all skip masked cells; masking a
cell is equivalent to zeroing its ``y`` and ``x`` entries, which the panel
constructor enforces.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInput, InvalidInput


class FamilyKind(str, Enum):
    UNCONSTRAINED = "unconstrained"
    SEMIPARAMETRIC = "semiparametric"
    HOMOGENEOUS = "homogeneous"


@dataclass(frozen=True)
class ModelFamily:
    """Which constraint set is active, plus the zero-pricing-error variant."""

    kind: FamilyKind
    zero_alpha: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))


UNCONSTRAINED = ModelFamily(FamilyKind.UNCONSTRAINED)
SEMIPARAMETRIC = ModelFamily(FamilyKind.SEMIPARAMETRIC)
HOMOGENEOUS = ModelFamily(FamilyKind.HOMOGENEOUS)


class SemiMatrices(NamedTuple):
    """Semiparametric decision pair: per-asset block and shared block."""

    diamond: np.ndarray  # (N, T)
    star: np.ndarray  # (p-1, T)


@dataclass(frozen=True)
class Panel:
    """Returns, observation mask and per-cell covariate vectors.

    ``y`` is ``(N, T)``, ``mask`` is boolean ``(N, T)`` with True marking an
    observed cell, and ``x`` is ``(N, T, p)``. Masked cells are zeroed on
    construction and the arrays are frozen, so a Panel can be shared across
    solver instances and worker processes.
    """

    y: np.ndarray
    mask: np.ndarray
    x: np.ndarray
    asset_ids: tuple = field(default=(), compare=False)
    period_ids: tuple = field(default=(), compare=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        x = np.array(self.x, dtype=float)
        if y.ndim != 2:
            raise InvalidInput(f"y must be 2-D, got shape {y.shape}")
        if mask.shape != y.shape:
            raise InvalidInput(f"mask shape {mask.shape} != y shape {y.shape}")
        if x.ndim != 3 or x.shape[:2] != y.shape:
            raise InvalidInput(f"x shape {x.shape} incompatible with y shape {y.shape}")
        n, t, p = x.shape
        if min(n, t, p) < 1:
            raise InvalidInput("panel dimensions must all be >= 1")
        if not np.all(np.isfinite(y[mask])):
            raise InvalidInput("observed returns contain non-finite values")
        if not np.all(np.isfinite(x[mask])):
            raise InvalidInput("observed covariates contain non-finite values")
        y = np.where(mask, y, 0.0)
        x = np.where(mask[:, :, None], x, 0.0)
        for arr in (y, mask, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "x", x)

    @property
    def n_assets(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.x.shape[2]

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def with_mask(self, mask: np.ndarray) -> "Panel":
        """Copy of the panel with extra cells masked out (for CV holdouts)."""
        mask = np.asarray(mask, dtype=bool)
        if np.any(mask & ~self.mask):
            raise InvalidInput("cannot unmask cells: their values were zeroed "
                               "during canonicalization")
        return Panel(self.y, mask, self.x, self.asset_ids, self.period_ids)

    def restrict_periods(self, t_stop: int) -> "Panel":
        """Panel over periods ``1..t_stop`` (for recursive refits)."""
        if not 1 <= t_stop <= self.n_periods:
            raise InvalidInput(f"t_stop = {t_stop} out of range")
        return Panel(self.y[:, :t_stop], self.mask[:, :t_stop], self.x[:, :t_stop],
                     self.asset_ids, self.period_ids[:t_stop])


def check_family(panel: Panel, family: ModelFamily):
    """Validate family-specific panel requirements."""
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        if panel.n_covariates < 2:
            raise InvalidInput("semiparametric family requires p >= 2")
        first = panel.x[:, :, 0][panel.mask]
        if first.size and not np.all(first == 1.0):
            raise InvalidInput(
                "semiparametric family requires the first covariate to be "
                "exactly 1 on observed cells")


def decision_shape(panel: Panel, family: ModelFamily):
    n, t, p = panel.x.shape
    if family.kind is FamilyKind.UNCONSTRAINED:
        return (n * p, t)
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        return ((n, t), (p - 1, t))
    return (p, t)


def zero_decision(panel: Panel, family: ModelFamily):
    """Family-native all-zeros decision matrix."""
    n, t, p = panel.x.shape
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        return SemiMatrices(np.zeros((n, t)), np.zeros((p - 1, t)))
    return np.zeros(decision_shape(panel, family))


def _check_decision(panel: Panel, family: ModelFamily, gamma):
    check_family(panel, family)
    want = decision_shape(panel, family)
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        if not isinstance(gamma, (tuple, SemiMatrices)) or len(gamma) != 2:
            raise InvalidInput("semiparametric decision must be a (diamond, star) pair")
        d, s = np.asarray(gamma[0], float), np.asarray(gamma[1], float)
        if d.shape != want[0] or s.shape != want[1]:
            raise InvalidInput(
                f"decision shapes {d.shape}, {s.shape} != expected {want}")
        return SemiMatrices(d, s)
    g = np.asarray(gamma, dtype=float)
    if g.shape != want:
        raise InvalidInput(f"decision shape {g.shape} != expected {want}")
    return g


def _fit_values(panel: Panel, family: ModelFamily, gamma) -> np.ndarray:
    n, t, p = panel.x.shape
    if family.kind is FamilyKind.UNCONSTRAINED:
        blocks = gamma.reshape(n, p, t)
        return np.einsum("itk,ikt->it", panel.x, blocks)
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        return gamma.diamond + np.einsum("itk,kt->it", panel.x[:, :, 1:], gamma.star)
    return np.einsum("itk,kt->it", panel.x, gamma)


def fitted_matrix(panel: Panel, family: ModelFamily, gamma) -> np.ndarray:
    """Model values ``tr(X_it' Gamma)`` for every cell, shape (N, T).

    Computed on all cells, masked or not; held-out predictions read the
    entries the training mask hid.
    """
    gamma = _check_decision(panel, family, gamma)
    return _fit_values(panel, family, gamma)


def _residuals(panel: Panel, family: ModelFamily, gamma):
    """Masked residual matrix ``fit - y`` of shape (N, T)."""
    return (_fit_values(panel, family, gamma) - panel.y) * panel.mask


def loss(panel: Panel, family: ModelFamily, gamma) -> float:
    """Half the sum of squared residuals over observed cells."""
    gamma = _check_decision(panel, family, gamma)
    r = _residuals(panel, family, gamma)
    return 0.5 * float(np.sum(r * r))


def gradient(panel: Panel, family: ModelFamily, gamma):
    """Exact gradient of :func:`loss`, in the same family-native layout."""
    gamma = _check_decision(panel, family, gamma)
    n, t, p = panel.x.shape
    r = _residuals(panel, family, gamma)
    if family.kind is FamilyKind.UNCONSTRAINED:
        g = np.einsum("itk,it->ikt", panel.x, r)
        return g.reshape(n * p, t)
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        g_star = np.einsum("itk,it->kt", panel.x[:, :, 1:], r)
        return SemiMatrices(r.copy(), g_star)
    return np.einsum("itk,it->kt", panel.x, r)


def lipschitz_constant(panel: Panel, family: ModelFamily) -> float:
    """Gradient Lipschitz constant of the family's loss, observed cells only."""
    check_family(panel, family)
    if panel.n_observed == 0:
        raise DegenerateInput("all cells are masked")
    if family.kind is FamilyKind.UNCONSTRAINED:
        sq = np.einsum("itk,itk->it", panel.x, panel.x)
        return float(np.max(sq[panel.mask]))
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        xs = panel.x[:, :, 1:]
        sq = np.einsum("itk,itk->it", xs, xs)
        max_x2 = float(np.max(sq[panel.mask]))
        gram = np.einsum("itk,itl->tkl", xs, xs) / panel.n_assets
        lam = float(np.max(np.linalg.eigvalsh(gram)))
        return float(np.sqrt(2.0 * max(1.0 + max_x2, lam + lam ** 2)))
    gram = np.einsum("itk,itl->tkl", panel.x, panel.x)
    return float(np.max(np.linalg.eigvalsh(gram)))


# --- flat <-> native adapters used by the solver -------------------------
#
# The solver iterates on a single 2-D array per family; for the
# semiparametric family that array is the rescaled stack (diamond; sqrt(N)
# star) on which the nuclear penalty acts.

def to_solver_matrix(panel: Panel, family: ModelFamily, gamma) -> np.ndarray:
    gamma = _check_decision(panel, family, gamma)
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        root_n = np.sqrt(panel.n_assets)
        return np.vstack([gamma.diamond, root_n * gamma.star])
    return gamma


def from_solver_matrix(panel: Panel, family: ModelFamily, M: np.ndarray):
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        n = panel.n_assets
        root_n = np.sqrt(n)
        return SemiMatrices(M[:n].copy(), M[n:] / root_n)
    return M


def solver_loss(panel: Panel, family: ModelFamily, M: np.ndarray) -> float:
    return loss(panel, family, from_solver_matrix(panel, family, M))


def solver_gradient(panel: Panel, family: ModelFamily, M: np.ndarray) -> np.ndarray:
    n, t, p = panel.x.shape
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        root_n = np.sqrt(n)
        w = panel.x[:, :, 1:] / root_n
        r = (M[:n] + np.einsum("itk,kt->it", w, M[n:]) - panel.y) * panel.mask
        g_star = np.einsum("itk,it->kt", w, r)
        return np.vstack([r, g_star])
    return gradient(panel, family, M)
