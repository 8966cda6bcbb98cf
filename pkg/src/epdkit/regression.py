"""Robust estimation for the Gaussian linear regression model.

Fits MLE, minimum-DPD, and minimum-EPD estimators of theta = (coef, log sigma)
by monotone quasi-Newton descent on the empirical divergence objective, and
computes the empirical curvature/score-variance (sandwich) matrices used by
the information criteria.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .divergence import (
    ALPHA_EPS,
    GAMMA_EPS,
    TuningTriple,
    UnivariateGaussian,
    _SERIES_MAX_TERMS,
    _SERIES_RTOL,
    gaussian_power_integral,
)
from .optim import minimize_bfgs

_LOG_2PI = math.log(2.0 * math.pi)


class SingularDesignError(ValueError):
    """Design matrix is rank deficient or otherwise degenerate."""


class NotConvergedError(RuntimeError):
    """A converged fit is required for this operation."""


class NonPositiveDefiniteError(RuntimeError):
    """Curvature matrix is not positive definite."""


class EstimatorKind(enum.Enum):
    MLE = "mle"
    DPDE = "dpd"
    EPDE = "epd"


@dataclass
class RegressionProblem:
    """Design matrix (rows = observations) and response vector."""

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float)
        if X.ndim != 2:
            raise ValueError("design must be a 2-d array")
        n, p = X.shape
        if y.shape != (n,):
            raise ValueError("response length must match the number of rows")
        if not (n > p >= 1):
            raise ValueError(f"need n > p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("design and response must be finite")
        const_cols = int(np.sum(X.std(axis=0) == 0.0))
        if const_cols > 1:
            raise SingularDesignError("more than one constant column in design")
        if np.linalg.matrix_rank(X) < p:
            raise SingularDesignError("design matrix is rank deficient")
        self.design = X
        self.response = y

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]


@dataclass
class ParamVector:
    """Regression coefficients plus log noise scale."""

    coef: np.ndarray
    log_sigma: float

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=float)
        if not (np.all(np.isfinite(c)) and math.isfinite(self.log_sigma)):
            raise ValueError("parameters must be finite")
        self.coef = c

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    def flat(self) -> np.ndarray:
        return np.append(self.coef, self.log_sigma)

    @staticmethod
    def from_flat(v: np.ndarray) -> "ParamVector":
        v = np.asarray(v, dtype=float)
        return ParamVector(coef=v[:-1].copy(), log_sigma=float(v[-1]))


@dataclass
class FitOptions:
    max_iter: int = 500
    grad_tol: float = 1e-8
    rel_obj_tol: float = 1e-10
    fix_sigma: float | None = None


@dataclass
class FitResult:
    params: ParamVector
    estimator_kind: EstimatorKind
    tuning: TuningTriple
    objective_value: float
    iterations: int
    converged: bool
    per_sample_scores: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.per_sample_scores.shape[0]

    @property
    def q(self) -> int:
        return self.per_sample_scores.shape[1]


def _effective_triple(t: TuningTriple, kind: EstimatorKind) -> TuningTriple:
    if kind is EstimatorKind.DPDE:
        return TuningTriple(alpha=0.0, beta=0.0, gamma=t.gamma)
    return t


def _series_sum(alpha: float, coef_fn) -> float:
    """Sum coef_fn(k) * alpha^{k-2} over k >= 2 (regular at alpha = 0)."""
    if abs(alpha) < ALPHA_EPS:
        return coef_fn(2)
    acc = 0.0
    apow = 1.0
    for k in range(2, 2 + _SERIES_MAX_TERMS):
        term = apow * coef_fn(k)
        acc += term
        if not math.isfinite(acc):
            return math.inf
        if abs(term) <= _SERIES_RTOL * abs(acc) and k > 2:
            return acc
        apow *= alpha
    raise RuntimeError("exponential-component series did not converge")


def _model_side(sigma: float, t: TuningTriple):
    """Model-side term of V and its derivative w.r.t. log sigma.

    Both depend on theta only through sigma.  Uses d I_k / d log sigma
    = -(k-1) I_k for the Gaussian power integrals.
    """
    g = UnivariateGaussian(0.0, sigma)
    a, b, gam = t.alpha, t.beta, t.gamma
    val = 0.0
    dls = 0.0
    if b > 0.0:
        ik = lambda k: gaussian_power_integral(g, float(k))
        val += b * _series_sum(a, lambda k: (k - 1) / math.factorial(k) * ik(k))
        dls += b * _series_sum(
            a, lambda k: -(k - 1) ** 2 / math.factorial(k) * ik(k))
    if b < 1.0:
        pk = gaussian_power_integral(g, 1.0 + gam)
        val += (1.0 - b) * pk
        dls += (1.0 - b) * (-gam) * pk
    return val, dls


def _data_side(problem: RegressionProblem, params: ParamVector, t: TuningTriple):
    """Per-sample data term of V plus the weighted scores for the gradient."""
    a, b, gam = t.alpha, t.beta, t.gamma
    mu = problem.design @ params.coef
    sigma = params.sigma
    # extreme trial points overflow to inf; line searches reject them
    with np.errstate(over="ignore"):
        r = (problem.response - mu) / sigma
        logf = -0.5 * r * r - params.log_sigma - 0.5 * _LOG_2PI
    with np.errstate(over="ignore"):
        f = np.exp(logf)
        # value: beta (e^{af}-1)/a + (1-beta) ((g+1) f^g - 1)/g (limit branches)
        if abs(a) < ALPHA_EPS:
            exp_term = f * (1.0 + 0.5 * a * f)
        else:
            exp_term = np.expm1(a * f) / a
        if gam < GAMMA_EPS:
            poly_term = 1.0 + logf
        else:
            fg = np.exp(gam * logf)
            poly_term = ((gam + 1.0) * fg - 1.0) / gam
        vals = b * exp_term + (1.0 - b) * poly_term
        # weight w(f) = beta f e^{af} + (1-beta)(1+g) f^g; f^g via exp(g log f)
        fg = np.exp(gam * logf)
        w = b * f * np.exp(a * f) + (1.0 - b) * (1.0 + gam) * fg
    # score components of d log f / d(coef, log sigma)
    with np.errstate(over="ignore"):
        u_coef = problem.design * (r / sigma)[:, None]
        u_ls = r * r - 1.0
    return vals, w, u_coef, u_ls


def _mle_per_sample(problem: RegressionProblem, params: ParamVector):
    mu = problem.design @ params.coef
    sigma = params.sigma
    with np.errstate(over="ignore"):
        r = (problem.response - mu) / sigma
        nll = 0.5 * r * r + params.log_sigma + 0.5 * _LOG_2PI
        s_coef = -problem.design * (r / sigma)[:, None]
        s_ls = 1.0 - r * r
    return nll, np.column_stack([s_coef, s_ls])


def per_sample_scores(problem: RegressionProblem, params: ParamVector,
                      t: TuningTriple, kind: EstimatorKind) -> np.ndarray:
    """n x q matrix of per-observation gradient contributions of the objective."""
    if kind is EstimatorKind.MLE:
        return _mle_per_sample(problem, params)[1]
    te = _effective_triple(t, kind)
    _, mdls = _model_side(params.sigma, te)
    _, w, u_coef, u_ls = _data_side(problem, params, te)
    s_coef = -w[:, None] * u_coef
    s_ls = mdls - w * u_ls
    return np.column_stack([s_coef, s_ls])


def empirical_objective(problem: RegressionProblem, params: ParamVector,
                        t: TuningTriple, kind: EstimatorKind) -> float:
    """Mean samplewise divergence H_n (mean negative log-likelihood for MLE)."""
    if params.sigma == 0.0:
        # log_sigma so negative that exp underflowed; treat as infeasible so
        # line searches backtrack
        return math.inf
    if kind is EstimatorKind.MLE:
        return float(np.mean(_mle_per_sample(problem, params)[0]))
    te = _effective_triple(t, kind)
    mval, _ = _model_side(params.sigma, te)
    vals, _, _, _ = _data_side(problem, params, te)
    with np.errstate(invalid="ignore"):
        # inf - inf at infeasible trial points gives nan, which line
        # searches reject
        return float(mval - np.mean(vals))


def objective_gradient(problem: RegressionProblem, params: ParamVector,
                       t: TuningTriple, kind: EstimatorKind) -> np.ndarray:
    """Analytic gradient of the objective w.r.t. (coef, log sigma)."""
    g = per_sample_scores(problem, params, t, kind).mean(axis=0)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite objective gradient")
    return g


def ols_init(problem: RegressionProblem) -> ParamVector:
    coef, _, _, _ = np.linalg.lstsq(problem.design, problem.response, rcond=None)
    resid = problem.response - problem.design @ coef
    dof = max(problem.n - problem.p, 1)
    sigma = math.sqrt(float(resid @ resid) / dof)
    return ParamVector(coef=coef, log_sigma=math.log(max(sigma, 1e-12)))


def fit(problem: RegressionProblem, t: TuningTriple, kind: EstimatorKind,
        init: ParamVector | None = None,
        opts: FitOptions | None = None) -> FitResult:
    """Fit the chosen estimator by damped quasi-Newton descent."""
    opts = opts or FitOptions()
    start = init or ols_init(problem)
    if opts.fix_sigma is not None:
        ls_fixed = math.log(opts.fix_sigma)

        def unpack(v):
            return ParamVector(coef=v, log_sigma=ls_fixed)

        x0 = np.asarray(start.coef, dtype=float)

        def fun(v):
            return empirical_objective(problem, unpack(v), t, kind)

        def grad(v):
            return objective_gradient(problem, unpack(v), t, kind)[:-1]
    else:
        unpack = ParamVector.from_flat
        x0 = start.flat()

        def fun(v):
            return empirical_objective(problem, unpack(v), t, kind)

        def grad(v):
            return objective_gradient(problem, unpack(v), t, kind)

    res = minimize_bfgs(fun, grad, x0, max_iter=opts.max_iter,
                        grad_tol=opts.grad_tol, rel_obj_tol=opts.rel_obj_tol)
    params = unpack(res.x)
    scores = per_sample_scores(problem, params, t, kind)
    return FitResult(
        params=params,
        estimator_kind=kind,
        tuning=_effective_triple(t, kind),
        objective_value=res.fun,
        iterations=res.iterations,
        converged=res.converged,
        per_sample_scores=scores,
    )


@dataclass
class SandwichMatrices:
    psi_hat: np.ndarray
    omega_hat: np.ndarray
    xi_hat: np.ndarray


def _psi_coeffs(sigma: float, t: TuningTriple):
    """Scalar weights of the block-diagonal at-model curvature.

    For a Gaussian model the integrals of f^k e^{alpha f} u u^T decompose into
    x x^T I_k / (k sigma^2) for the coefficient block and
    I_k (3/k^2 - 2/k + 1) for the log-sigma block, summed over the
    exponential series (k = 2 + j) and the polynomial power (k = 1 + gamma).
    """
    g = UnivariateGaussian(0.0, sigma)
    a, b, gam = t.alpha, t.beta, t.gamma

    def c1(k):
        return gaussian_power_integral(g, k) / k

    def c2(k):
        return gaussian_power_integral(g, k) * (3.0 / k ** 2 - 2.0 / k + 1.0)

    a1 = 0.0
    a2 = 0.0
    if b > 0.0:
        # sum over j >= 0 of alpha^j / j! * c(2 + j)
        acc1 = acc2 = 0.0
        apow = 1.0
        for j in range(_SERIES_MAX_TERMS):
            w = apow / math.factorial(j)
            t1 = w * c1(2.0 + j)
            t2 = w * c2(2.0 + j)
            acc1 += t1
            acc2 += t2
            if j > 0 and abs(t1) <= _SERIES_RTOL * abs(acc1) \
                    and abs(t2) <= _SERIES_RTOL * max(abs(acc2), 1e-300):
                break
            apow *= a
        a1 += b * acc1
        a2 += b * acc2
    if b < 1.0:
        k = 1.0 + gam
        a1 += (1.0 - b) * (1.0 + gam) * c1(k)
        a2 += (1.0 - b) * (1.0 + gam) * c2(k)
    return a1, a2


def sandwich(problem: RegressionProblem, fit_result: FitResult,
             t: TuningTriple | None = None) -> SandwichMatrices:
    """Empirical curvature (Psi) and score-variance (Omega) plug-ins.

    Psi uses the at-model form of the population curvature (the terms weighted
    by the model-truth gap vanish there); Omega is the mean outer product of
    the per-sample gradient contributions.
    """
    if not fit_result.converged:
        raise NotConvergedError("sandwich matrices require a converged fit")
    te = fit_result.tuning if t is None else _effective_triple(
        t, fit_result.estimator_kind)
    sigma = fit_result.params.sigma
    X = problem.design
    n, p = X.shape
    xtx = X.T @ X / n
    psi = np.zeros((p + 1, p + 1))
    if fit_result.estimator_kind is EstimatorKind.MLE:
        psi[:p, :p] = xtx / sigma ** 2
        psi[p, p] = 2.0
    else:
        a1, a2 = _psi_coeffs(sigma, te)
        psi[:p, :p] = xtx * (a1 / sigma ** 2)
        psi[p, p] = a2
    psi = 0.5 * (psi + psi.T)
    eig_min = float(np.min(np.linalg.eigvalsh(psi)))
    if eig_min <= 0.0:
        raise NonPositiveDefiniteError(
            f"curvature matrix not positive definite (min eig {eig_min:g})")
    s = fit_result.per_sample_scores
    omega = s.T @ s / s.shape[0]
    omega = 0.5 * (omega + omega.T)
    xi = s.mean(axis=0)
    return SandwichMatrices(psi_hat=psi, omega_hat=omega, xi_hat=xi)
