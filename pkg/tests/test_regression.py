import math

import numpy as np
import pytest

from epdkit.divergence import TuningTriple, UnivariateGaussian, weight_fn
from epdkit.optim import numerical_gradient
from epdkit.regression import (
    EstimatorKind,
    FitOptions,
    NotConvergedError,
    ParamVector,
    RegressionProblem,
    SingularDesignError,
    empirical_objective,
    fit,
    gaussian_power_integral,
    objective_gradient,
    ols_init,
    per_sample_scores,
    sandwich,
)


def make_problem(n=60, p=3, seed=0, sigma=0.8):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p)
    y = X @ beta + sigma * rng.standard_normal(n)
    return RegressionProblem(design=X, response=y)


def test_problem_validation():
    with pytest.raises(ValueError):
        RegressionProblem(design=np.ones((3, 5)), response=np.ones(3))
    with pytest.raises(SingularDesignError):
        X = np.column_stack([np.ones(10), np.ones(10) * 2.0,
                             np.arange(10.0)])
        RegressionProblem(design=X, response=np.ones(10))
    with pytest.raises(SingularDesignError):
        X = np.column_stack([np.arange(10.0), 2.0 * np.arange(10.0)])
        RegressionProblem(design=X, response=np.ones(10))


def test_mle_fit_matches_ols_closed_form():
    problem = make_problem(seed=1)
    t = TuningTriple(0.0, 0.0, 0.0)
    res = fit(problem, t, EstimatorKind.MLE)
    assert res.converged
    X, y = problem.design, problem.response
    coef_ols = np.linalg.solve(X.T @ X, X.T @ y)
    sigma_mle = math.sqrt(float(np.mean((y - X @ coef_ols) ** 2)))
    assert res.params.coef == pytest.approx(coef_ols, abs=1e-7)
    assert res.params.sigma == pytest.approx(sigma_mle, rel=1e-7)


def test_objective_value_invariant():
    problem = make_problem(seed=2)
    t = TuningTriple(0.4, 0.6, 0.3)
    res = fit(problem, t, EstimatorKind.EPDE)
    direct = empirical_objective(problem, res.params, t, EstimatorKind.EPDE)
    assert res.objective_value == pytest.approx(direct, abs=1e-12)


def test_epd_beta_zero_equals_dpd_objective():
    problem = make_problem(seed=3)
    params = ols_init(problem)
    for gam in (0.1, 0.3, 0.7):
        t_epd = TuningTriple(alpha=0.9, beta=0.0, gamma=gam)
        t_dpd = TuningTriple(alpha=0.0, beta=0.0, gamma=gam)
        a = empirical_objective(problem, params, t_epd, EstimatorKind.EPDE)
        b = empirical_objective(problem, params, t_dpd, EstimatorKind.DPDE)
        assert a == pytest.approx(b, rel=1e-13)


def test_gradient_matches_finite_differences():
    problem = make_problem(seed=4)
    triples = [TuningTriple(0.3, 0.5, 0.3), TuningTriple(0.0, 0.0, 0.4),
               TuningTriple(0.8, 1.0, 0.2), TuningTriple(0.0, 0.0, 0.0),
               TuningTriple(0.5, 0.2, 0.0)]
    rng = np.random.default_rng(5)
    for t in triples:
        for kind in (EstimatorKind.MLE, EstimatorKind.DPDE,
                     EstimatorKind.EPDE):
            v = np.append(rng.standard_normal(problem.p) * 0.5,
                          0.2 * rng.standard_normal())
            params = ParamVector.from_flat(v)
            ga = objective_gradient(problem, params, t, kind)
            gn = numerical_gradient(
                lambda x: empirical_objective(problem,
                                              ParamVector.from_flat(x),
                                              t, kind), v)
            denom = max(1.0, float(np.max(np.abs(gn))))
            assert float(np.max(np.abs(ga - gn))) / denom < 1e-6


def test_dpd_gradient_matches_weighted_score_oracle():
    """Independent assembly of the beta=0 gradient from the weight function."""
    problem = make_problem(seed=6)
    gam = 0.35
    t = TuningTriple(0.0, 0.0, gam)
    params = ParamVector(coef=np.array([0.5, -0.2, 0.1]), log_sigma=0.1)
    X, y = problem.design, problem.response
    sigma = params.sigma
    r = (y - X @ params.coef) / sigma
    g = UnivariateGaussian(0.0, sigma)
    f = g.pdf(r * sigma)  # residual density values f(y; theta)
    w = weight_fn(f, t)
    u_coef = X * (r / sigma)[:, None]
    u_ls = r * r - 1.0
    model_dls = -gam * (1.0 + gam) * gaussian_power_integral(g, 1.0 + gam) \
        / (1.0 + gam)
    grad_coef = -np.mean(w[:, None] * u_coef, axis=0)
    grad_ls = model_dls - np.mean(w * u_ls)
    ga = objective_gradient(problem, params, t, EstimatorKind.DPDE)
    oracle = np.append(grad_coef, grad_ls)
    assert float(np.max(np.abs(ga - oracle))) \
        / max(1.0, float(np.max(np.abs(oracle)))) < 1e-10


def test_gradient_at_optimum_small():
    problem = make_problem(seed=7)
    for kind, t in ((EstimatorKind.MLE, TuningTriple(0.0, 0.0, 0.0)),
                    (EstimatorKind.DPDE, TuningTriple(0.0, 0.0, 0.3)),
                    (EstimatorKind.EPDE, TuningTriple(0.3, 0.5, 0.3))):
        res = fit(problem, t, kind)
        assert res.converged
        g = objective_gradient(problem, res.params, t, kind)
        assert float(np.max(np.abs(g))) <= 10 * FitOptions().grad_tol


def test_fix_sigma_only_moves_coefficients():
    problem = make_problem(seed=8)
    t = TuningTriple(0.3, 0.5, 0.3)
    res = fit(problem, t, EstimatorKind.EPDE,
              opts=FitOptions(fix_sigma=0.9))
    assert res.params.sigma == pytest.approx(0.9, rel=1e-12)
    assert res.converged


def test_per_sample_scores_mean_is_gradient():
    problem = make_problem(seed=9)
    t = TuningTriple(0.5, 0.4, 0.2)
    params = ols_init(problem)
    s = per_sample_scores(problem, params, t, EstimatorKind.EPDE)
    assert s.shape == (problem.n, problem.p + 1)
    g = objective_gradient(problem, params, t, EstimatorKind.EPDE)
    assert s.mean(axis=0) == pytest.approx(g, abs=1e-14)


def test_sandwich_properties():
    problem = make_problem(n=120, seed=10)
    t = TuningTriple(0.3, 0.5, 0.3)
    res = fit(problem, t, EstimatorKind.EPDE)
    sw = sandwich(problem, res)
    q = problem.p + 1
    assert sw.psi_hat.shape == (q, q)
    assert np.allclose(sw.psi_hat, sw.psi_hat.T)
    assert np.allclose(sw.omega_hat, sw.omega_hat.T)
    assert np.min(np.linalg.eigvalsh(sw.psi_hat)) > 0.0
    assert np.min(np.linalg.eigvalsh(sw.omega_hat)) > -1e-12
    # score mean approximately zero at the optimum
    assert float(np.max(np.abs(sw.xi_hat))) < 1e-6


def test_sandwich_mle_fisher_blocks():
    problem = make_problem(n=200, seed=11)
    t = TuningTriple(0.0, 0.0, 0.0)
    res = fit(problem, t, EstimatorKind.MLE)
    sw = sandwich(problem, res)
    p = problem.p
    X = problem.design
    expected = X.T @ X / problem.n / res.params.sigma ** 2
    assert sw.psi_hat[:p, :p] == pytest.approx(expected, rel=1e-10)
    assert sw.psi_hat[p, p] == pytest.approx(2.0)
    assert np.all(sw.psi_hat[:p, p] == 0.0)


def test_sandwich_requires_convergence():
    problem = make_problem(seed=12)
    t = TuningTriple(0.3, 0.5, 0.3)
    res = fit(problem, t, EstimatorKind.EPDE, opts=FitOptions(max_iter=1))
    assert not res.converged
    with pytest.raises(NotConvergedError):
        sandwich(problem, res)


def test_dpd_kind_ignores_alpha_beta():
    problem = make_problem(seed=13)
    res1 = fit(problem, TuningTriple(0.9, 0.8, 0.3), EstimatorKind.DPDE)
    res2 = fit(problem, TuningTriple(0.0, 0.0, 0.3), EstimatorKind.DPDE)
    assert res1.params.coef == pytest.approx(res2.params.coef, abs=1e-10)
    assert res1.tuning == TuningTriple(0.0, 0.0, 0.3)
