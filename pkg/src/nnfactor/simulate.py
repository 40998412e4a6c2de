"""Monte Carlo study: data generators, replication runner, error metrics.

Three generators share one covariate process (a scaled Gaussian, an AR(1),
a plain Gaussian, and a constant) and a two-factor AR(1) factor path:

* DGP1 -- heterogeneous intercepts and loadings (unconstrained family);
* DGP2 -- heterogeneous constant rows, shared slope rows (semiparametric);
* DGP3 -- fully homogeneous coefficients (homogeneous family).

DGP2 panels carry the constant as the first covariate, which the
semiparametric solver requires; the other two keep the generator's natural
order with the constant last. Reported mean squared errors follow the
replication-averaged normalizations of the study tables, with rotation
alignment applied to loading and factor estimates.
"""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import extract, solver, tuning
from .errors import InvalidInput, NumericalFailure
from .problems import (HOMOGENEOUS, SEMIPARAMETRIC, UNCONSTRAINED, FamilyKind,
                       ModelFamily, Panel)
from .seeding import child_seed, rng_for

N_COVARIATES = 4
N_FACTORS = 2

DEFAULT_FAMILY = {1: UNCONSTRAINED, 2: SEMIPARAMETRIC, 3: HOMOGENEOUS}

# Study-table column order per family.
TABLE_COLUMNS = {
    FamilyKind.UNCONSTRAINED: ("pi", "a", "b", "f"),
    FamilyKind.SEMIPARAMETRIC: ("pi_diamond", "pi_star", "mu", "lambda",
                                "phi", "phi_mat", "f"),
    FamilyKind.HOMOGENEOUS: ("pi", "phi0", "phi_mat0", "f"),
}


@dataclass(frozen=True)
class DgpSpec:
    which: int
    n: int
    t: int
    seed: int = 0

    def __post_init__(self):
        if self.which not in (1, 2, 3):
            raise InvalidInput(f"DGP must be 1, 2 or 3, got {self.which}")
        if self.n < 2 or self.t < 2:
            raise InvalidInput("need N >= 2 and T >= 2")


@dataclass(frozen=True)
class SimTruth:
    """Generated panel plus every quantity the error metrics compare against."""

    spec: DgpSpec
    panel: Panel
    a: np.ndarray  # (N, p) per-asset intercept coefficients
    b: np.ndarray  # (N, p, K) per-asset loading coefficients
    f: np.ndarray  # (T, K) factor path
    eps: np.ndarray  # (N, T) error draws
    mu: np.ndarray | None = None
    phi: np.ndarray | None = None
    lam: np.ndarray | None = None
    phi_mat: np.ndarray | None = None

    def pi_stacked(self) -> np.ndarray:
        """Np x T coefficient matrix ``a 1' + B F'``."""
        n, p = self.a.shape
        blocks = self.a[:, :, None] + self.b @ self.f.T
        return blocks.reshape(n * p, self.f.shape[0])

    def pi_diamond(self) -> np.ndarray:
        return self.mu[:, None] + self.lam @ self.f.T

    def pi_star(self) -> np.ndarray:
        return self.phi[:, None] + self.phi_mat @ self.f.T

    def pi_homogeneous(self) -> np.ndarray:
        return self.a[0][:, None] + self.b[0] @ self.f.T


def generate(spec: DgpSpec) -> SimTruth:
    """Draw one replication panel; all randomness comes from the spec seed."""
    rng = rng_for(spec.seed, "dgp")
    n, t = spec.n, spec.t

    u = rng.standard_normal((n, t, 3))
    sigma = rng.uniform(1.0, 2.0, size=t)
    x2_init = rng.standard_normal(n)
    x = np.empty((n, t, N_COVARIATES))
    x[:, :, 0] = sigma[None, :] * u[:, :, 0]
    prev = x2_init
    for tt in range(t):
        prev = 0.3 * prev + u[:, tt, 1]
        x[:, tt, 1] = prev
    x[:, :, 2] = u[:, :, 2]
    x[:, :, 3] = 1.0

    f0 = rng.normal(1.0 / 0.7, np.sqrt(1.0 / 0.91), size=N_FACTORS)
    eta = rng.normal(1.0, 1.0, size=(t, N_FACTORS))
    f = np.empty((t, N_FACTORS))
    prev_f = f0
    for tt in range(t):
        prev_f = 0.3 * prev_f + eta[tt]
        f[tt] = prev_f

    eps = rng.normal(0.0, 2.0, size=(n, t))

    a = np.zeros((n, N_COVARIATES))
    b = np.zeros((n, N_COVARIATES, N_FACTORS))
    compact = {}
    if spec.which == 1:
        theta = rng.standard_normal(n)
        delta = rng.uniform(1.0, 3.0, size=n)
        a[:, 0] = 1.0
        a[:, 1] = theta
        b[:, 2, 0] = 2.0
        b[:, 3, 1] = delta
    elif spec.which == 2:
        delta = rng.uniform(1.0, 3.0, size=n)
        # Constant first so the panel is semiparametric-ready.
        x = x[:, :, [3, 0, 1, 2]]
        a[:, 1] = 1.0
        a[:, 2] = 1.0
        b[:, 0, 1] = delta
        b[:, 3, 0] = 2.0
        lam = np.zeros((n, N_FACTORS))
        lam[:, 1] = delta
        phi_mat = np.zeros((3, N_FACTORS))
        phi_mat[2, 0] = 2.0
        compact = dict(mu=np.zeros(n), phi=np.array([1.0, 1.0, 0.0]),
                       lam=lam, phi_mat=phi_mat)
    else:
        a[:, 0] = 1.0
        a[:, 1] = 1.0
        b[:, 2, 0] = 2.0
        b[:, 3, 1] = 2.0

    y = (np.einsum("itk,ik->it", x, a)
         + np.einsum("itk,ikj,tj->it", x, b, f)
         + eps)
    panel = Panel(y=y, mask=np.ones((n, t), dtype=bool), x=x)
    return SimTruth(spec=spec, panel=panel, a=a, b=b, f=f, eps=eps, **compact)


@dataclass
class RepRecord:
    rep: int
    k_hat: int
    chosen_c: float
    errors: dict
    failed: bool = False


@dataclass
class SimReport:
    spec: DgpSpec
    family: ModelFamily
    reps: int
    k_true: int
    records: list = field(default_factory=list)

    @property
    def n_failures(self) -> int:
        return sum(r.failed for r in self.records)

    @property
    def k_correct_rate(self) -> float:
        ok = [r for r in self.records if not r.failed]
        if not ok:
            return math.nan
        return sum(r.k_hat == self.k_true for r in ok) / len(ok)

    @property
    def chosen_c_counts(self) -> Counter:
        return Counter(r.chosen_c for r in self.records if not r.failed)

    def mse(self, name: str, correct_k_only: bool = False) -> float:
        """Replication average of one squared-error metric.

        Metrics that need the rotation alignment are undefined in
        replications where it cannot be formed; those replications are
        skipped and the average runs over the rest.
        """
        vals = []
        for r in self.records:
            if r.failed or (correct_k_only and r.k_hat != self.k_true):
                continue
            v = r.errors.get(name)
            if v is not None:
                vals.append(v)
        return float(np.mean(vals)) if vals else math.nan

    def metric_names(self) -> list:
        names = []
        for r in self.records:
            for k in r.errors:
                if k not in names:
                    names.append(k)
        return names


def _replication_errors(truth: SimTruth, family: ModelFamily,
                        est: extract.FactorEstimate, fit: extract.LowRankFit) -> dict:
    n, t = truth.spec.n, truth.spec.t
    k_hat = est.k_hat
    errors = {}

    h = None
    h_inv_t = None
    if k_hat >= 1:
        h = extract.rotation_align(truth.f, est.f_hat, zero_alpha=family.zero_alpha)
        if k_hat == N_FACTORS:
            h_inv_t = np.linalg.inv(h.T)

    if family.kind is FamilyKind.UNCONSTRAINED:
        errors["pi"] = np.sum((fit.matrix - truth.pi_stacked()) ** 2) / (n * t)
        errors["a"] = np.sum((est.a_hat - truth.a.reshape(-1)) ** 2) / n
        b_true = truth.b.reshape(n * N_COVARIATES, N_FACTORS)
        if h is not None:
            errors["b"] = np.sum((est.b_hat - b_true @ h) ** 2) / n
        if h_inv_t is not None:
            errors["f"] = np.sum((est.f_hat - truth.f @ h_inv_t) ** 2) / t
    elif family.kind is FamilyKind.SEMIPARAMETRIC:
        diamond, star = fit.matrix
        errors["pi_diamond"] = np.sum((diamond - truth.pi_diamond()) ** 2) / (n * t)
        errors["pi_star"] = np.sum((star - truth.pi_star()) ** 2) / t
        errors["pi"] = errors["pi_diamond"] + errors["pi_star"]
        errors["mu"] = np.sum((est.mu_hat - truth.mu) ** 2) / n
        errors["phi"] = np.sum((est.phi_hat - truth.phi) ** 2)
        if h is not None:
            errors["lambda"] = np.sum((est.lambda_hat - truth.lam @ h) ** 2) / n
            errors["phi_mat"] = np.sum((est.phi_mat_hat - truth.phi_mat @ h) ** 2)
        if h_inv_t is not None:
            errors["f"] = np.sum((est.f_hat - truth.f @ h_inv_t) ** 2) / t
    else:
        pi0 = truth.pi_homogeneous()
        errors["pi"] = np.sum((fit.matrix - pi0) ** 2) / t
        errors["phi0"] = np.sum((est.a_hat - truth.a[0]) ** 2)
        if h is not None:
            errors["phi_mat0"] = np.sum((est.b_hat - truth.b[0] @ h) ** 2)
        if h_inv_t is not None:
            errors["f"] = np.sum((est.f_hat - truth.f @ h_inv_t) ** 2) / t
    return {k: float(v) for k, v in errors.items()}


def run_replication(spec: DgpSpec, family: ModelFamily, plan, rep: int,
                    solver_opts: dict | None = None) -> RepRecord:
    """One generate/tune/solve/extract/score pass.

    ``plan`` is either a :class:`~nnfactor.tuning.CvPlan` or a fixed tuning
    constant. Seeds for the draw and for fold assignment are derived from
    (spec seed, replication index).
    """
    rep_spec = DgpSpec(spec.which, spec.n, spec.t,
                       seed=child_seed(spec.seed, "rep", rep))
    truth = generate(rep_spec)
    opts = solver_opts or {}
    try:
        if isinstance(plan, tuning.CvPlan):
            rep_plan = tuning.CvPlan(n_folds=plan.n_folds, grid=plan.grid,
                                     seed=child_seed(plan.seed, "folds", rep),
                                     warm_start=plan.warm_start)
            cv = tuning.cross_validate(truth.panel, family, rep_plan, opts)
            c = cv.chosen_c
        else:
            c = float(plan)
        lam = solver.default_lambda(truth.panel, family, c)
        fit = extract.fit_panel(truth.panel, family,
                                solver.SolverConfig(lam=lam, **opts))
        delta = extract.default_delta(truth.panel, family)
        est = extract.extract_factors(fit, delta=delta)
        errors = _replication_errors(truth, family, est, fit)
        return RepRecord(rep=rep, k_hat=est.k_hat, chosen_c=c, errors=errors)
    except NumericalFailure:
        return RepRecord(rep=rep, k_hat=-1, chosen_c=math.nan, errors={},
                         failed=True)


def run_study(spec: DgpSpec, family: ModelFamily | None = None, plan=None,
              reps: int = 200, solver_opts: dict | None = None,
              n_jobs: int = 1) -> SimReport:
    """Replicate the generate/estimate cycle and aggregate the error metrics."""
    if reps < 1:
        raise InvalidInput("need at least one replication")
    family = family if family is not None else DEFAULT_FAMILY[spec.which]
    plan = plan if plan is not None else tuning.CvPlan(seed=spec.seed)
    report = SimReport(spec=spec, family=family, reps=reps, k_true=N_FACTORS)
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(run_replication, spec, family, plan, rep,
                                   solver_opts) for rep in range(reps)]
            report.records = [f.result() for f in futures]
    else:
        report.records = [run_replication(spec, family, plan, rep, solver_opts)
                          for rep in range(reps)]
    return report


def fixed_c_sweep(spec: DgpSpec, family: ModelFamily | None = None,
                  grid=tuning.SIMULATION_GRID, reps: int = 50,
                  cv_plan: tuning.CvPlan | None = None,
                  solver_opts: dict | None = None) -> dict:
    """Fitted-matrix MSE per fixed grid value, plus the CV-selected MSE.

    Mirrors the study's fixed-versus-CV comparison: every grid value is fit
    on the same replication draws (warm-started down the grid), and the CV
    line reruns selection per replication.
    """
    family = family if family is not None else DEFAULT_FAMILY[spec.which]
    grid = tuple(sorted(float(c) for c in grid))
    opts = solver_opts or {}
    sums = {c: 0.0 for c in grid}
    cv_sum = 0.0
    for rep in range(reps):
        rep_spec = DgpSpec(spec.which, spec.n, spec.t,
                           seed=child_seed(spec.seed, "rep", rep))
        truth = generate(rep_spec)
        start = None
        for c in reversed(grid):
            lam = solver.default_lambda(truth.panel, family, c)
            gamma, _ = solver.solve(truth.panel, family,
                                    solver.SolverConfig(lam=lam, initial=start, **opts))
            start = gamma
            sums[c] += _pi_mse(truth, family, gamma)
        plan = cv_plan if cv_plan is not None else tuning.CvPlan(grid=grid)
        rep_plan = tuning.CvPlan(n_folds=plan.n_folds, grid=plan.grid,
                                 seed=child_seed(plan.seed, "folds", rep),
                                 warm_start=plan.warm_start)
        cv = tuning.cross_validate(truth.panel, family, rep_plan, opts)
        lam = solver.default_lambda(truth.panel, family, cv.chosen_c)
        gamma, _ = solver.solve(truth.panel, family, solver.SolverConfig(lam=lam, **opts))
        cv_sum += _pi_mse(truth, family, gamma)
    return {"fixed": {c: sums[c] / reps for c in grid}, "cv": cv_sum / reps}


def _pi_mse(truth: SimTruth, family: ModelFamily, gamma) -> float:
    n, t = truth.spec.n, truth.spec.t
    if family.kind is FamilyKind.UNCONSTRAINED:
        return float(np.sum((gamma - truth.pi_stacked()) ** 2) / (n * t))
    if family.kind is FamilyKind.SEMIPARAMETRIC:
        diamond, star = gamma
        return float(np.sum((diamond - truth.pi_diamond()) ** 2) / (n * t)
                     + np.sum((star - truth.pi_star()) ** 2) / t)
    return float(np.sum((gamma - truth.pi_homogeneous()) ** 2) / t)
