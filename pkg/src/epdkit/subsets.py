"""Covariate screening and exhaustive subset ranking.

A proximal-gradient LASSO on the divergence objective shrinks the candidate
covariate set; every non-empty subset of the survivors is then fitted and
scored under each criterion, and the per-criterion top lists are merged into
a frequency-based consolidated ranking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .criteria import CriterionKind, CriterionReport, criterion
from .divergence import TuningTriple
from .regression import (
    EstimatorKind,
    FitOptions,
    ParamVector,
    RegressionProblem,
    empirical_objective,
    fit,
    objective_gradient,
    ols_init,
)

MAX_MASK_SIZE = 20
ACTIVE_TOL = 1e-6

CRITERION_ESTIMATOR = {
    CriterionKind.MLIC: EstimatorKind.MLE,
    CriterionKind.DPDIC: EstimatorKind.DPDE,
    CriterionKind.EPDIC: EstimatorKind.EPDE,
}


class EmptyActiveSetError(RuntimeError):
    """LASSO zeroed every coefficient; retry with a smaller penalty."""


@dataclass(frozen=True)
class CandidateModel:
    covariate_mask: tuple   # sorted column indices into the screened design
    labels: tuple

    def __post_init__(self):
        if len(self.covariate_mask) == 0:
            raise ValueError("candidate model must be non-empty")
        if len(self.covariate_mask) != len(self.labels):
            raise ValueError("mask and labels must have equal length")

    def name(self) -> str:
        return ", ".join(self.labels)


def _soft_threshold(v, thr):
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def lasso_path_point(problem: RegressionProblem, t: TuningTriple,
                     kind: EstimatorKind, lam: float,
                     unpenalized: tuple = (),
                     init: ParamVector | None = None,
                     max_iter: int = 1000, tol: float = 1e-8) -> ParamVector:
    """Proximal-gradient minimizer of H_n + lam * ||coef_penalized||_1.

    Soft-threshold step on the penalized coefficients, plain gradient step on
    the rest; backtracking halving enforces descent of the penalized objective.
    """
    params = init or ols_init(problem)
    x = params.flat()
    p = problem.p
    pen_mask = np.ones(p + 1, dtype=bool)
    pen_mask[list(unpenalized)] = False
    pen_mask[p] = False  # log sigma never penalized

    def smooth(v):
        return empirical_objective(problem, ParamVector.from_flat(v), t, kind)

    def pen(v):
        return lam * float(np.sum(np.abs(v[pen_mask])))

    f = smooth(x)
    step = 1.0
    for _ in range(max_iter):
        g = objective_gradient(problem, ParamVector.from_flat(x), t, kind)
        moved = False
        while step >= 1e-14:
            cand = x - step * g
            cand[pen_mask] = _soft_threshold(cand[pen_mask], step * lam)
            f_cand = smooth(cand)
            if np.isfinite(f_cand) and f_cand + pen(cand) <= f + pen(x) - 1e-15:
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        delta = float(np.max(np.abs(cand - x)))
        x, f = cand, f_cand
        step = min(step * 1.5, 1.0)
        if delta <= tol:
            break
    return ParamVector.from_flat(x)


def lambda_grid_default(problem: RegressionProblem,
                        unpenalized: tuple = (),
                        n_points: int = 50) -> np.ndarray:
    """Log-spaced grid from the all-zero threshold down by a factor 1e-3.

    The upper end is the smallest penalty that zeroes every penalized
    coefficient under the likelihood objective (gradient bound at coef=0).
    """
    X, y = problem.design, problem.response
    n, p = X.shape
    pen = np.ones(p, dtype=bool)
    pen[list(unpenalized)] = False
    # profile out the unpenalized block (typically the intercept)
    if np.any(~pen):
        Xu = X[:, ~pen]
        coef_u, _, _, _ = np.linalg.lstsq(Xu, y, rcond=None)
        resid = y - Xu @ coef_u
    else:
        resid = y
    sigma2 = max(float(resid @ resid) / n, 1e-12)
    lam_max = float(np.max(np.abs(X[:, pen].T @ resid))) / (n * sigma2)
    lam_max = max(lam_max, 1e-8)
    return np.geomspace(lam_max, 1e-3 * lam_max, n_points)


def lasso_screen(problem: RegressionProblem, t: TuningTriple,
                 kind: EstimatorKind,
                 lambda_grid: np.ndarray | None = None,
                 unpenalized: tuple = (),
                 opts: FitOptions | None = None) -> np.ndarray:
    """Select the active covariate set along a penalty path.

    Each grid value is solved by proximal gradient (warm-started); the active
    set is refitted without penalty and scored by the matching criterion, and
    the best-scoring active set is returned as a boolean mask.
    """
    if lambda_grid is None:
        lambda_grid = lambda_grid_default(problem, unpenalized=unpenalized)
    lambda_grid = np.sort(np.asarray(lambda_grid, dtype=float))[::-1]
    ck = {v: k for k, v in CRITERION_ESTIMATOR.items()}[kind]
    best = None
    warm = None
    seen = set()
    for lam in lambda_grid:
        sol = lasso_path_point(problem, t, kind, float(lam),
                               unpenalized=unpenalized, init=warm)
        warm = sol
        active = np.abs(sol.coef) > ACTIVE_TOL
        active[list(unpenalized)] = True
        if not np.any(active):
            continue
        key = tuple(np.flatnonzero(active))
        if key in seen:
            continue
        seen.add(key)
        sub = RegressionProblem(design=problem.design[:, active],
                                response=problem.response)
        refit = fit(sub, t, kind, opts=opts)
        if not refit.converged:
            continue
        score = criterion(sub, refit, t, ck).total
        if best is None or score < best[0]:
            best = (score, active)
    if best is None:
        raise EmptyActiveSetError(
            "every penalty level gave an empty or non-converged active set; "
            "use a smaller penalty")
    return best[1]


def enumerate_and_rank(problem: RegressionProblem, mask,
                       criteria_kinds: list,
                       tunings: dict,
                       labels: list | None = None,
                       always_include: tuple = (),
                       opts: FitOptions | None = None) -> dict:
    """Fit every non-empty subset of the masked covariates under each criterion.

    Returns {CriterionKind: ascending list of (CandidateModel, CriterionReport)}.
    always_include columns (e.g. an intercept) join every candidate design but
    are not part of the enumeration.
    """
    cols = [int(j) for j in np.flatnonzero(np.asarray(mask))] \
        if np.asarray(mask).dtype == bool else [int(j) for j in mask]
    if len(cols) > MAX_MASK_SIZE:
        raise ValueError(f"mask of {len(cols)} covariates exceeds the cap "
                         f"of {MAX_MASK_SIZE}")
    if labels is None:
        labels = [f"x{j}" for j in cols]
    label_of = dict(zip(cols, labels))
    results = {ck: [] for ck in criteria_kinds}
    for size in range(1, len(cols) + 1):
        for subset in combinations(cols, size):
            model = CandidateModel(
                covariate_mask=tuple(subset),
                labels=tuple(label_of[j] for j in subset))
            design_cols = sorted(set(always_include) | set(subset))
            sub = RegressionProblem(design=problem.design[:, design_cols],
                                    response=problem.response)
            for ck in criteria_kinds:
                ek = CRITERION_ESTIMATOR[ck]
                triple = tunings[ek]
                res = fit(sub, triple, ek, opts=opts)
                results[ck].append((model, criterion(sub, res, triple, ck)))
    for ck in criteria_kinds:
        results[ck].sort(key=lambda e: e[1].total)
    return results


@dataclass
class RankedEntry:
    model: object
    freq: int
    sel_freq: float
    totals: dict  # CriterionKind -> total


@dataclass
class ConsolidatedRanking:
    entries: list = field(default_factory=list)


def consolidate(lists: dict, top_k: int = 15) -> ConsolidatedRanking:
    """Merge per-criterion top-k lists by appearance frequency.

    lists maps CriterionKind to an ascending (model, report) list; models are
    counted over the top_k of each list and sorted by frequency (descending),
    ties by ascending EPDIC total when available.
    """
    if len(lists) < 2:
        raise ValueError("consolidation needs at least two ranked lists")
    counts: dict = {}
    totals: dict = {}
    for ck, ranked in lists.items():
        for model, report in ranked:
            totals.setdefault(model, {})[ck] = report.total
        for model, _ in ranked[:top_k]:
            counts[model] = counts.get(model, 0) + 1
    n_lists = len(lists)

    def sort_key(item):
        model, freq = item
        epdic = totals[model].get(CriterionKind.EPDIC, float("inf"))
        return (-freq, epdic)

    entries = [RankedEntry(model=model, freq=freq, sel_freq=freq / n_lists,
                           totals=totals[model])
               for model, freq in sorted(counts.items(), key=sort_key)]
    return ConsolidatedRanking(entries=entries)
