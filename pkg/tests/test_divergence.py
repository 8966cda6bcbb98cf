import math

import numpy as np
import pytest
from scipy.integrate import quad

from epdkit.divergence import (
    DiscreteDensity,
    TuningTriple,
    UnivariateGaussian,
    discrete_samplewise_contribution,
    exp_component_integral,
    gaussian_power_integral,
    generating_fn,
    generating_fn_d2,
    samplewise_contribution,
    weight_fn,
)


def test_tuning_triple_validation():
    TuningTriple(alpha=0.0, beta=0.0, gamma=0.0)
    with pytest.raises(ValueError):
        TuningTriple(alpha=0.3, beta=1.2, gamma=0.3)
    with pytest.raises(ValueError):
        TuningTriple(alpha=0.3, beta=0.5, gamma=-0.1)
    with pytest.raises(ValueError):
        TuningTriple(alpha=float("nan"), beta=0.5, gamma=0.3)


def test_generating_fn_zero_at_origin_and_one():
    for t in (TuningTriple(0.5, 0.5, 0.5), TuningTriple(0.0, 0.0, 0.3),
              TuningTriple(0.0, 0.0, 0.0), TuningTriple(1.0, 1.0, 0.5)):
        assert generating_fn(0.0, t) == pytest.approx(0.0, abs=1e-14)


def test_generating_fn_convex():
    xs = np.linspace(0.05, 3.0, 50)
    for t in (TuningTriple(0.5, 0.5, 0.5), TuningTriple(0.0, 0.0, 0.3),
              TuningTriple(0.0, 0.0, 0.0), TuningTriple(0.8, 0.3, 1.0)):
        assert np.all(generating_fn_d2(xs, t) > 0.0)


def test_generating_fn_limit_continuity():
    xs = np.linspace(0.1, 2.0, 9)
    near_zero_g = TuningTriple(0.3, 0.5, 1e-12)
    limit_g = TuningTriple(0.3, 0.5, 0.0)
    assert generating_fn(xs, near_zero_g) == pytest.approx(
        generating_fn(xs, limit_g), rel=1e-9)
    small_g = TuningTriple(0.3, 0.5, 1e-7)
    assert generating_fn(xs, small_g) == pytest.approx(
        generating_fn(xs, limit_g), rel=1e-5)
    small_a = TuningTriple(1e-7, 0.5, 0.3)
    limit_a = TuningTriple(0.0, 0.5, 0.3)
    assert generating_fn(xs, small_a) == pytest.approx(
        generating_fn(xs, limit_a), rel=1e-6)


def test_generating_fn_d2_singularity():
    t = TuningTriple(0.3, 0.5, 0.5)
    with pytest.raises(ValueError):
        generating_fn_d2(0.0, t)
    # pure exponential component is regular at the origin
    assert generating_fn_d2(0.0, TuningTriple(0.3, 1.0, 0.5)) > 0.0


def test_weight_fn_bounded_for_positive_gamma():
    t = TuningTriple(0.5, 0.5, 0.3)
    fs = np.linspace(0.0, 0.5, 200)
    w = weight_fn(fs, t)
    assert w[0] == pytest.approx(0.0, abs=1e-14)
    assert np.all(np.isfinite(w))


def test_gaussian_power_integral_vs_quadrature():
    for sigma in (0.5, 1.0, 2.5):
        g = UnivariateGaussian(mu=0.7, sigma=sigma)
        for k in (1.0, 1.3, 2.0, 3.7):
            num, _ = quad(lambda y: g.pdf(y) ** k,
                          g.mu - 12 * sigma, g.mu + 12 * sigma,
                          epsabs=1e-12)
            assert gaussian_power_integral(g, k) == pytest.approx(num,
                                                                  rel=1e-10)


def test_gaussian_power_integral_overflow_guard():
    g = UnivariateGaussian(mu=0.0, sigma=1e-150)
    assert gaussian_power_integral(g, 5.0) == math.inf


def test_exp_component_integral_nonnegative_and_zero_at_origin():
    g = UnivariateGaussian(0.0, 1.0)
    assert exp_component_integral(g, 0.0) == 0.0
    for a in (0.1, 0.5, 1.0):
        assert exp_component_integral(g, a) > 0.0


def test_samplewise_contribution_reduces_to_dpd_at_beta_zero():
    g = UnivariateGaussian(0.2, 1.3)
    gam = 0.4
    t = TuningTriple(alpha=0.7, beta=0.0, gamma=gam)
    ys = np.array([-1.0, 0.0, 0.5, 2.0])
    f = g.pdf(ys)
    expected = (gaussian_power_integral(g, 1.0 + gam)
                - ((gam + 1.0) * f ** gam - 1.0) / gam)
    assert samplewise_contribution(ys, g, t) == pytest.approx(expected,
                                                              rel=1e-12)


def test_samplewise_contribution_kl_limit_is_nll():
    g = UnivariateGaussian(-0.3, 0.8)
    t = TuningTriple(alpha=0.0, beta=0.0, gamma=0.0)
    ys = np.array([-2.0, -0.3, 1.0])
    v = samplewise_contribution(ys, g, t)
    assert v == pytest.approx(-np.log(g.pdf(ys)), rel=1e-12)


def test_expected_contribution_minimized_at_truth():
    """Bregman nonnegativity: E_g[V(y; f)] >= E_g[V(y; g)] for f != g."""
    g = UnivariateGaussian(0.0, 1.0)
    t = TuningTriple(0.4, 0.5, 0.3)

    def expected_v(model):
        val, _ = quad(lambda y: g.pdf(y)
                      * samplewise_contribution(y, model, t),
                      -12.0, 12.0, epsabs=1e-12)
        return val

    at_truth = expected_v(g)
    for model in (UnivariateGaussian(0.5, 1.0), UnivariateGaussian(0.0, 1.5),
                  UnivariateGaussian(-0.2, 0.7)):
        assert expected_v(model) > at_truth


def test_contribution_bounded_in_y_for_positive_gamma():
    g = UnivariateGaussian(0.0, 1.0)
    t = TuningTriple(0.3, 0.5, 0.3)
    far = samplewise_contribution(np.array([50.0, 500.0, 5000.0]), g, t)
    assert np.all(np.isfinite(far))
    assert np.ptp(far) < 1e-12  # flat once f underflows


def test_discrete_contribution_matches_direct_formula():
    d = DiscreteDensity(probs=np.array([0.2, 0.5, 0.3]))
    t = TuningTriple(alpha=0.6, beta=0.4, gamma=0.5)
    a, b, gam = t.alpha, t.beta, t.gamma
    p = d.as_array()
    for idx in range(3):
        f = p[idx]
        model = (b / a ** 2 * np.sum(np.exp(a * p) * (a * p - 1.0) + 1.0)
                 + (1.0 - b) * np.sum(p ** (1.0 + gam)))
        data = (b / a * (np.exp(a * f) - 1.0)
                + (1.0 - b) / gam * ((gam + 1.0) * f ** gam - 1.0))
        assert discrete_samplewise_contribution(idx, d, t) == pytest.approx(
            model - data, rel=1e-12)


def test_discrete_contribution_kl_limit():
    d = DiscreteDensity(probs=np.array([0.25, 0.75]))
    t = TuningTriple(alpha=0.0, beta=0.0, gamma=0.0)
    assert discrete_samplewise_contribution(1, d, t) == pytest.approx(
        -math.log(0.75), rel=1e-12)
