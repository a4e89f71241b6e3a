"""Structure-selection experiment: configuration grid, subject-wise CV, meta-regression."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import bn as bnlib
from .bn import BnConfig
from .bouts import cohort_bouts, discretize_subject, fit_discretization
from .hypnogram_io import HEALTH_STATUSES, Cohort
from .metrics import accuracy, macro_f1, mean_ovr_auroc

REGRESSORS = ("lag = 0", "lag = 1", "lag = 2", "lag = 3", "lag = 4", "TSSO", "Stage-Duration", "CST", "CRST")
METRICS = ("accuracy", "f1", "auroc")


class PlanningError(ValueError):
    pass


class RegressionError(ValueError):
    pass


class FoldError(RuntimeError):
    pass


def enumerate_configs(alpha: float = 1.0) -> list[BnConfig]:
    return [
        BnConfig(lag, tsso, dur, cum, alpha)
        for lag, tsso, dur, cum in itertools.product(
            range(5), (False, True), (False, True), bnlib.CUMULATIVE_VARIANTS
        )
    ]


def final_config(alpha: float = 1.0) -> BnConfig:
    """Lag 2 with stage durations, no TSSO or cumulative covariate."""
    return BnConfig(2, False, True, "none", alpha)


@dataclass
class CvPlan:
    n_folds: int
    assignments: dict[str, int]
    seed: int | None = None

    def fold_subjects(self, fold: int) -> list[str]:
        return [s for s, f in self.assignments.items() if f == fold]


def make_cv_plan(cohort: Cohort, n_folds: int = 3, seed=None) -> CvPlan:
    """HS-stratified subject-wise fold assignment.

    Subjects of each group are shuffled and dealt round-robin; the dealer
    position carries over between groups so fold sizes stay balanced too.
    """
    rng = np.random.default_rng(seed)
    groups = {h: [s.subject_id for s in cohort if s.health_status == h] for h in HEALTH_STATUSES}
    for h, ids in groups.items():
        if ids and len(ids) < n_folds:
            raise PlanningError(f"group {h} has {len(ids)} subjects, fewer than {n_folds} folds")
    assignments, pos = {}, 0
    for h in HEALTH_STATUSES:
        for sid in rng.permutation(groups[h]):
            assignments[str(sid)] = pos % n_folds
            pos += 1
    ordered = {s.subject_id: assignments[s.subject_id] for s in cohort}
    return CvPlan(n_folds, ordered, seed)


@dataclass
class FoldData:
    """Training and test subjects of one fold, discretized with training-only bins."""

    index: int
    spec: object
    train: list
    test: list


def prepare_folds(cohort: Cohort, plan: CvPlan) -> list[FoldData]:
    subjects = cohort_bouts(cohort)
    folds = []
    for k in range(plan.n_folds):
        train = [s for s in subjects if plan.assignments[s.subject_id] != k]
        test = [s for s in subjects if plan.assignments[s.subject_id] == k]
        try:
            spec = fit_discretization(train)
        except ValueError as exc:
            raise FoldError(f"fold {k}: {exc}") from exc
        folds.append(
            FoldData(
                k,
                spec,
                [discretize_subject(s, spec) for s in train],
                [discretize_subject(s, spec) for s in test],
            )
        )
    return folds


@dataclass
class SubjectScore:
    subject_id: str
    hs: int
    fold: int
    accuracy: float
    f1: float
    posterior: np.ndarray


@dataclass
class ConfigResult:
    config: BnConfig
    fold_accuracy: list[float] = field(default_factory=list)
    fold_f1: list[float] = field(default_factory=list)
    fold_auroc: list[float] = field(default_factory=list)
    subjects: list[SubjectScore] = field(default_factory=list)

    def mean(self, metric: str) -> float:
        return float(np.mean(getattr(self, f"fold_{metric}")))

    def sd(self, metric: str) -> float:
        v = getattr(self, f"fold_{metric}")
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def on_subject(self, metric: str) -> tuple[float, float]:
        """Mean and SD across test subjects of a per-subject metric."""
        v = np.array([getattr(s, metric) for s in self.subjects])
        return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0

    def pooled_auroc(self) -> float:
        scores = np.array([s.posterior for s in self.subjects])
        return mean_ovr_auroc(scores, [s.hs for s in self.subjects])


def score_subjects(model, subjects, fold: int = 0) -> list[SubjectScore]:
    """Per-subject next-stage accuracy/F1 (true HS given) and HS posterior."""
    dag = model.dag
    windows = bnlib.build_windows(subjects, model.config, dag)
    if len(windows) == 0:
        return []
    probs = bnlib.predict_proba(model, windows)
    pred = np.argmax(probs, axis=1)
    truth = windows.column(bnlib.stage_node(0))
    post = bnlib.window_hs_posteriors(model, windows)
    out = []
    for i, subj in enumerate(subjects):
        m = windows.subject == i
        if not m.any():
            continue
        p = post[m].mean(axis=0)
        out.append(
            SubjectScore(
                subj.subject_id, subj.hs, fold, accuracy(truth[m], pred[m]), macro_f1(truth[m], pred[m]), p / p.sum()
            )
        )
    return out


def fit_model(config: BnConfig, subjects, spec) -> bnlib.FittedBn:
    dag = bnlib.build_structure(config, spec)
    windows = bnlib.build_windows(subjects, config, dag)
    return bnlib.fit(dag, windows, config.smoothing_alpha, config, spec)


def evaluate_config(config: BnConfig, cohort: Cohort, plan: CvPlan, folds: list[FoldData] | None = None) -> ConfigResult:
    """Cross-validate one configuration.

    Fold accuracy and F1 are means of per-subject values over the fold's
    test subjects; fold AUROC ranks the test subjects' averaged posteriors.
    """
    folds = prepare_folds(cohort, plan) if folds is None else folds
    result = ConfigResult(config)
    for fd in folds:
        try:
            model = fit_model(config, fd.train, fd.spec)
        except ValueError as exc:
            raise FoldError(f"fold {fd.index}, {config.label}: {exc}") from exc
        scores = score_subjects(model, fd.test, fd.index)
        result.subjects.extend(scores)
        result.fold_accuracy.append(float(np.mean([s.accuracy for s in scores])))
        result.fold_f1.append(float(np.mean([s.f1 for s in scores])))
        result.fold_auroc.append(mean_ovr_auroc(np.array([s.posterior for s in scores]), [s.hs for s in scores]))
    return result


def run_grid(cohort: Cohort, plan: CvPlan, configs=None, progress=None) -> list[ConfigResult]:
    configs = enumerate_configs() if configs is None else configs
    folds = prepare_folds(cohort, plan)
    out = []
    for i, cfg in enumerate(configs):
        out.append(evaluate_config(cfg, cohort, plan, folds))
        if progress:
            progress(i, cfg)
    return out


def design_row(config: BnConfig) -> np.ndarray:
    row = np.zeros(len(REGRESSORS))
    row[config.lag] = 1.0
    row[5] = float(config.include_tsso)
    row[6] = float(config.include_duration)
    row[7] = float(config.cumulative == "CST")
    row[8] = float(config.cumulative == "CRST")
    return row


def significance_band(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass
class MetaRegression:
    metric: str
    design: np.ndarray
    response: np.ndarray
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    f_stat: float
    f_pvalue: float
    df_model: int
    df_resid: int
    r2: float
    r2_adjusted: float

    def rows(self):
        for name, b, p in zip(REGRESSORS, self.coefficients, self.p_values):
            yield name, float(b), float(p), significance_band(p)


def ols_no_intercept(X, y):
    """Least squares without intercept via QR. Returns (beta, XtX_inv)."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    if n <= p or np.linalg.matrix_rank(X) < p:
        raise RegressionError(f"design of shape {X.shape} is rank deficient")
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ y)
    r_inv = np.linalg.solve(r, np.eye(p))
    return beta, r_inv @ r_inv.T


def fit_meta_regression(results: list[ConfigResult], metric: str = "accuracy", scale: float = 100.0) -> MetaRegression:
    """Regress a CV metric (in percent by default) on inclusion indicators.

    No intercept: the five lag indicators partition the grid. F and R^2
    use the uncentred total sum of squares, as is usual for models without
    a constant.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    X = np.array([design_row(r.config) for r in results])
    y = np.array([r.mean(metric) for r in results]) * scale
    beta, xtx_inv = ols_no_intercept(X, y)
    n, p = X.shape
    resid = y - X @ beta
    ssr = float(resid @ resid)
    df_resid = n - p
    sigma2 = ssr / df_resid
    se = np.sqrt(np.diag(xtx_inv) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    pv = 2 * stats.t.sf(np.abs(t), df_resid)
    fitted = X @ beta
    ss_model = float(fitted @ fitted)
    tss = float(y @ y)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ss_model / p) / sigma2
    fp = float(stats.f.sf(f, p, df_resid))
    r2 = 1.0 - ssr / tss
    r2_adj = 1.0 - (n / df_resid) * (1.0 - r2)
    return MetaRegression(metric, X, y, beta, se, t, pv, float(f), fp, p, df_resid, r2, r2_adj)
