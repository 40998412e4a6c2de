"""Nuclear-norm regularized estimation of conditional factor models."""

from .errors import (ConfigError, DegenerateInput, FormatError, InvalidInput,
                     NumericalFailure, RankOverflowWarning, TuningFailure)
from .evaluate import (FitScores, in_sample_r2, oos_prediction,
                       oos_prediction_via_factors, out_of_sample_r2,
                       predicted_values, score_panel)
from .extract import (FactorEstimate, LowRankFit, default_delta,
                      extract_factors, fit_panel, rotation_align, select_rank)
from .linalg import (EigTopK, Svd, eig_top_k, nuclear_norm, operator_norm,
                     soft_threshold_singular, svd)
from .panel_io import (DesignSpec, PanelSchema, RawTable, build_design,
                       load_estimate, load_panel, rank_transform,
                       save_estimate)
from .problems import (HOMOGENEOUS, SEMIPARAMETRIC, UNCONSTRAINED, FamilyKind,
                       ModelFamily, Panel, SemiMatrices, fitted_matrix,
                       gradient, lipschitz_constant, loss, zero_decision)
from .simulate import DgpSpec, SimReport, SimTruth, fixed_c_sweep, generate, run_study
from .solver import SolverConfig, SolverReport, default_lambda, prox_step, solve
from .tuning import (EMPIRICAL_GRID, SIMULATION_GRID, CvPlan, CvResult,
                     assign_folds, cross_validate)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
