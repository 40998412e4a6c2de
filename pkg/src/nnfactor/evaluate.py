"""Goodness-of-fit: in-sample and recursive out-of-sample R-squared.

Three in-sample measures share one residual: total R-squared pools all
cells, the time-series variant averages per-asset ratios, and the
cross-sectional variant averages per-period ratios. The out-of-sample
counterparts refit on data through ``t - 1`` and predict period ``t`` with
the time-average factor premium; that prediction collapses to the row means
of the fitted low-rank matrix, so it does not depend on how many factors
are extracted.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import extract as extract_mod
from . import problems, solver, tuning
from .errors import InvalidInput
from .problems import FamilyKind, ModelFamily, Panel


@dataclass(frozen=True)
class FitScores:
    r2_total: float
    r2_ts_avg: float
    r2_cs_avg: float
    r2o_total: float = math.nan
    r2o_ts_avg: float = math.nan
    r2o_cs_avg: float = math.nan
    burn_in: int = 0
    excluded_assets: int = 0
    excluded_periods: int = 0
    skipped_refits: int = 0


def predicted_values(panel: Panel, estimate: extract_mod.FactorEstimate) -> np.ndarray:
    """In-sample model values ``x'(a_i + B_i f_t)`` for every cell."""
    a = estimate.a_blocks()
    fit = np.einsum("itk,ik->it", panel.x, a)
    if estimate.k_hat > 0:
        b = estimate.b_blocks()
        fit += np.einsum("itk,ikj,tj->it", panel.x, b, estimate.f_hat)
    return fit


def _ratio_scores(y, resid, mask, axis):
    """Per-slice ``1 - sum(resid^2)/sum(y^2)`` averages with exclusions."""
    sse = np.sum(np.where(mask, resid, 0.0) ** 2, axis=axis)
    ssy = np.sum(np.where(mask, y, 0.0) ** 2, axis=axis)
    ok = ssy > 0
    excluded = int(np.sum(~ok))
    if not np.any(ok):
        return math.nan, excluded
    return float(np.mean(1.0 - sse[ok] / ssy[ok])), excluded


def in_sample_r2(panel: Panel, estimate: extract_mod.FactorEstimate):
    """``(r2_total, r2_ts_avg, r2_cs_avg)`` over observed cells."""
    triple, _ = _in_sample_scores(panel, estimate)
    return triple


def _in_sample_scores(panel, estimate):
    resid = panel.y - predicted_values(panel, estimate)
    resid = np.where(panel.mask, resid, 0.0)
    ssy = float(np.sum(panel.y ** 2))
    r2_total = 1.0 - float(np.sum(resid ** 2)) / ssy if ssy > 0 else math.nan
    r2_ts, excl_assets = _ratio_scores(panel.y, resid, panel.mask, axis=1)
    r2_cs, excl_periods = _ratio_scores(panel.y, resid, panel.mask, axis=0)
    return (r2_total, r2_ts, r2_cs), (excl_assets, excl_periods)


def oos_prediction(panel: Panel, family: ModelFamily, gamma) -> np.ndarray:
    """Period-ahead predictions from a fit on periods ``1..t-1``.

    The premium estimate is the time average of the fitted factors, so the
    prediction reduces to ``x' (Pi_hat 1/(t-1))`` blockwise; the returned
    vector holds one value per asset using next-period covariates in
    ``panel`` (which must extend one period past the fit).
    """
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        diamond, star = gamma
        t_fit = diamond.shape[1]
        coef = np.concatenate([diamond.mean(axis=1)[:, None],
                               np.tile(star.mean(axis=1), (diamond.shape[0], 1))],
                              axis=1)
    else:
        t_fit = gamma.shape[1]
        means = gamma.mean(axis=1)
        n = panel.n_assets
        if family.kind is FamilyKind.UNCONSTRAINED:
            coef = means.reshape(n, -1)
        else:
            coef = np.tile(means, (n, 1))
    x_next = panel.x[:, t_fit, :]
    return np.einsum("ik,ik->i", x_next, coef)


def oos_prediction_via_factors(panel: Panel, fit: extract_mod.LowRankFit,
                               k: int) -> np.ndarray:
    """Same prediction assembled from a forced-rank factor extraction."""
    est = extract_mod.extract_factors(fit, k=k)
    t_fit = fit.n_periods
    lam_hat = est.f_hat.mean(axis=0) if est.k_hat > 0 else np.zeros(0)
    a = est.a_blocks()
    coef = a.copy()
    if est.k_hat > 0:
        coef += est.b_blocks() @ lam_hat
    x_next = panel.x[:, t_fit, :]
    return np.einsum("ik,ik->i", x_next, coef)


def out_of_sample_r2(panel: Panel, family: ModelFamily, burn_in: int,
                     c: float | None = None,
                     cv_plan: tuning.CvPlan | None = None,
                     reselect_each_period: bool = False,
                     solver_opts: dict | None = None):
    """Recursive predictive R-squared triple ``(total, ts_avg, cs_avg)``.

    For each period ``t >= burn_in`` (1-based) the model is refit on
    periods ``1..t-1`` (warm-started from the previous refit) and scored on
    period ``t``'s observed cells. The tuning constant is either fixed
    (``c``) or chosen by cross-validation on the burn-in window; per-period
    reselection is available but off by default.
    """
    triple, _, _ = _oos_scores(panel, family, burn_in, c, cv_plan,
                               reselect_each_period, solver_opts)
    return triple


def _oos_scores(panel, family, burn_in, c, cv_plan, reselect_each_period,
                solver_opts):
    if burn_in < 2:
        raise InvalidInput("burn_in must be >= 2 so at least one period is fit")
    if burn_in > panel.n_periods:
        raise InvalidInput("burn_in beyond the last period")
    if (c is None) and cv_plan is None:
        cv_plan = tuning.CvPlan()
    opts = solver_opts or {}

    chosen_c = c
    if chosen_c is None:
        window = panel.restrict_periods(burn_in - 1)
        chosen_c = tuning.cross_validate(window, family, cv_plan, opts).chosen_c

    n, t_total = panel.y.shape
    resid = np.zeros((n, t_total))
    eval_mask = np.zeros((n, t_total), dtype=bool)
    skipped = 0
    start = None
    for t in range(burn_in, t_total + 1):
        window = panel.restrict_periods(t - 1)
        if reselect_each_period and c is None:
            chosen_c = tuning.cross_validate(window, family, cv_plan, opts).chosen_c
        lam = solver.default_lambda(window, family, chosen_c)
        try:
            gamma, _ = solver.solve(window, family,
                                    solver.SolverConfig(lam=lam, initial=start, **opts))
        except (NumericalFailure, np.linalg.LinAlgError):
            skipped += 1
            start = None
            continue
        start = _pad_one_period(family, gamma)
        preds = oos_prediction(panel, family, gamma)
        col = t - 1
        obs = panel.mask[:, col]
        resid[obs, col] = panel.y[obs, col] - preds[obs]
        eval_mask[obs, col] = True

    scored = eval_mask
    y = np.where(scored, panel.y, 0.0)
    r = np.where(scored, resid, 0.0)
    ssy = float(np.sum(y ** 2))
    r2o_total = 1.0 - float(np.sum(r ** 2)) / ssy if ssy > 0 else math.nan
    r2o_ts, excl_assets = _ratio_scores(y, r, scored, axis=1)
    # Cross-sectional average runs over evaluated periods only.
    cols = np.flatnonzero(scored.any(axis=0))
    ratios = []
    excl_periods = 0
    for col in cols:
        ssy_col = float(np.sum(y[:, col] ** 2))
        if ssy_col > 0:
            ratios.append(1.0 - float(np.sum(r[:, col] ** 2)) / ssy_col)
        else:
            excl_periods += 1
    r2o_cs = float(np.mean(ratios)) if ratios else math.nan
    return (r2o_total, r2o_ts, r2o_cs), skipped, (excl_assets, excl_periods)


def _pad_one_period(family: ModelFamily, gamma):
    """Warm-start shape for the next refit: previous fit plus a zero column."""
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        diamond, star = gamma
        return problems.SemiMatrices(
            np.hstack([diamond, np.zeros((diamond.shape[0], 1))]),
            np.hstack([star, np.zeros((star.shape[0], 1))]))
    return np.hstack([gamma, np.zeros((gamma.shape[0], 1))])


def score_panel(panel: Panel, family: ModelFamily, estimate,
                burn_in: int | None = None, c: float | None = None,
                cv_plan: tuning.CvPlan | None = None,
                reselect_each_period: bool = False,
                solver_opts: dict | None = None) -> FitScores:
    """Bundle in-sample scores (and OOS scores when ``burn_in`` is given)."""
    r2, r2_ts, r2_cs = in_sample_r2(panel, estimate)
    if burn_in is None:
        return FitScores(r2, r2_ts, r2_cs)
    (r2o, r2o_ts, r2o_cs), skipped, (ea, ep) = _oos_scores(
        panel, family, burn_in, c, cv_plan, reselect_each_period, solver_opts)
    return FitScores(r2, r2_ts, r2_cs, r2o, r2o_ts, r2o_cs, burn_in=burn_in,
                     excluded_assets=ea, excluded_periods=ep,
                     skipped_refits=skipped)
