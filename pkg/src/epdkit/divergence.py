"""Exponential-polynomial divergence primitives.

The divergence family is generated by the convex function

    B(x) = (beta/alpha^2) (e^{alpha x} - 1 - alpha x)
         + ((1-beta)/gamma) (x^{gamma+1} - x)

with alpha real, beta in [0,1], gamma >= 0.  beta=0 gives the density
power divergence, beta=1 the Bregman exponential divergence, and
(beta, gamma) -> (0, 0) the Kullback-Leibler divergence.  The removable
singularities at alpha=0 and gamma=0 are handled by explicit limit
branches below the thresholds ALPHA_EPS and GAMMA_EPS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ALPHA_EPS = 1e-8
GAMMA_EPS = 1e-8

# Relative truncation threshold and term cap for the exponential-component
# power series.
_SERIES_RTOL = 1e-14
_SERIES_MAX_TERMS = 200

_LOG_2PI = math.log(2.0 * math.pi)


class NonConvergenceError(RuntimeError):
    """A power series failed to meet its truncation criterion."""


@dataclass(frozen=True)
class TuningTriple:
    """Robustness parameters (alpha, beta, gamma) of the divergence family."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)
                and math.isfinite(self.gamma)):
            raise ValueError("tuning parameters must be finite")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")


@dataclass(frozen=True)
class UnivariateGaussian:
    """Location-scale Gaussian model density."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def logpdf(self, y):
        z = (np.asarray(y, dtype=float) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * _LOG_2PI

    def pdf(self, y):
        return np.exp(self.logpdf(y))


@dataclass(frozen=True)
class DiscreteDensity:
    """Probability vector over a finite support 0..len(probs)-1."""

    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-d sequence")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")
        object.__setattr__(self, "probs", tuple(float(v) for v in p))

    def as_array(self):
        return np.asarray(self.probs, dtype=float)


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("argument of the generating function must be >= 0")
    return x


def generating_fn(x, t: TuningTriple):
    """Evaluate the convex generator B at x >= 0."""
    x = _check_x(x)
    a, b, g = t.alpha, t.beta, t.gamma
    if abs(a) < ALPHA_EPS:
        exp_part = 0.5 * x * x
    else:
        exp_part = (np.expm1(a * x) - a * x) / (a * a)
    if g < GAMMA_EPS:
        # x log x with the 0 log 0 = 0 convention
        with np.errstate(divide="ignore", invalid="ignore"):
            poly_part = np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0)), 0.0)
    else:
        poly_part = (x ** (g + 1.0) - x) / g
    return b * exp_part + (1.0 - b) * poly_part


def generating_fn_d1(x, t: TuningTriple):
    """First derivative B'(x)."""
    x = _check_x(x)
    a, b, g = t.alpha, t.beta, t.gamma
    if abs(a) < ALPHA_EPS:
        exp_part = x
    else:
        exp_part = np.expm1(a * x) / a
    if g < GAMMA_EPS:
        if np.any(x == 0.0):
            raise ValueError("B'(0) diverges in the gamma -> 0 limit")
        poly_part = 1.0 + np.log(x)
    else:
        poly_part = ((g + 1.0) * x ** g - 1.0) / g
    return b * exp_part + (1.0 - b) * poly_part


def generating_fn_d2(x, t: TuningTriple):
    """Second derivative B''(x); singular at x=0 when gamma < 1."""
    x = _check_x(x)
    a, b, g = t.alpha, t.beta, t.gamma
    g_eff = 0.0 if g < GAMMA_EPS else g
    out = b * np.exp(a * x)
    if b < 1.0:
        if g_eff < 1.0 and np.any(x == 0.0):
            raise ValueError("B''(0) is singular for gamma < 1")
        out = out + (1.0 - b) * (g_eff + 1.0) * x ** (g_eff - 1.0)
    return out


def weight_fn(f_val, t: TuningTriple):
    """Downweighting function w(f) = beta f e^{alpha f} + (1-beta)(1+gamma) f^gamma.

    Equals f * B''(f); bounded on [0, fmax] whenever gamma > 0.
    """
    f = _check_x(f_val)
    a, b, g = t.alpha, t.beta, t.gamma
    g_eff = 0.0 if g < GAMMA_EPS else g
    return b * f * np.exp(a * f) + (1.0 - b) * (1.0 + g_eff) * f ** g_eff


def gaussian_power_integral(g: UnivariateGaussian, k: float) -> float:
    """Closed form of the integral of f^k over the line, f Gaussian, k >= 1."""
    if k < 1.0:
        raise ValueError(f"power must be >= 1, got {k}")
    log_val = (-0.5 * math.log(k)
               - 0.5 * (k - 1.0) * (_LOG_2PI + 2.0 * math.log(g.sigma)))
    # overflows to inf (tiny sigma) so optimizer line searches can backtrack
    if log_val > 709.0:
        return math.inf
    return math.exp(log_val)


def _power_series(alpha: float, term_fn, start: int) -> float:
    """Sum term_fn(k) * alpha^k from k=start with relative truncation."""
    acc = 0.0
    apow = alpha ** start
    for k in range(start, start + _SERIES_MAX_TERMS):
        term = apow * term_fn(k)
        acc += term
        if not math.isfinite(acc):
            return math.inf
        if abs(term) <= _SERIES_RTOL * abs(acc) and k > start:
            return acc
        apow *= alpha
    raise NonConvergenceError(
        f"series did not converge within {_SERIES_MAX_TERMS} terms (alpha={alpha})")


def exp_component_integral(g: UnivariateGaussian, alpha: float) -> float:
    """Integral of e^{alpha f}(alpha f - 1) + 1 over the line, by power series."""
    if alpha == 0.0:
        return 0.0
    return _power_series(
        alpha,
        lambda k: (k - 1) / math.factorial(k) * gaussian_power_integral(g, k),
        start=2,
    )


def _exp_component_scaled(g: UnivariateGaussian, alpha: float) -> float:
    """exp_component_integral / alpha^2, regular at alpha = 0."""
    if abs(alpha) < ALPHA_EPS:
        return 0.5 * gaussian_power_integral(g, 2.0)
    return exp_component_integral(g, alpha) / (alpha * alpha)


def _expm1_ratio(alpha: float, f):
    """(e^{alpha f} - 1) / alpha, regular at alpha = 0."""
    if abs(alpha) < ALPHA_EPS:
        return f * (1.0 + 0.5 * alpha * f)
    return np.expm1(alpha * f) / alpha


def _poly_data_term(gamma: float, logf):
    """((gamma+1) f^gamma - 1) / gamma via log f, with the log-limit branch."""
    if gamma < GAMMA_EPS:
        return 1.0 + logf
    fg = np.exp(gamma * logf)
    return ((gamma + 1.0) * fg - 1.0) / gamma


def samplewise_contribution(y_obs, g: UnivariateGaussian, t: TuningTriple):
    """Per-observation divergence contribution V(y; theta) for a Gaussian model.

    Model side combines the exponential-component integral with the closed-form
    power integral of f^{1+gamma}; the data side evaluates B'(f(y)) termwise,
    with f^gamma on the polynomial piece.
    """
    a, b, gam = t.alpha, t.beta, t.gamma
    model = b * _exp_component_scaled(g, a)
    if b < 1.0:
        model += (1.0 - b) * gaussian_power_integral(g, 1.0 + gam)
    logf = g.logpdf(y_obs)
    f = np.exp(logf)
    data = b * _expm1_ratio(a, f) + (1.0 - b) * _poly_data_term(gam, logf)
    return model - data


def _exp_bracket_scaled(alpha: float, p):
    """(e^{alpha p}(alpha p - 1) + 1) / alpha^2, regular at alpha = 0."""
    p = np.asarray(p, dtype=float)
    if abs(alpha) < ALPHA_EPS:
        return 0.5 * p * p + alpha * p ** 3 / 3.0
    ap = alpha * p
    return (np.exp(ap) * (ap - 1.0) + 1.0) / (alpha * alpha)


def discrete_samplewise_contribution(y_obs: int, d: DiscreteDensity,
                                     t: TuningTriple) -> float:
    """Per-observation divergence contribution for a finite-support density."""
    p = d.as_array()
    if not 0 <= y_obs < p.size:
        raise IndexError(f"support index {y_obs} out of range for {p.size} atoms")
    a, b, gam = t.alpha, t.beta, t.gamma
    model = b * float(np.sum(_exp_bracket_scaled(a, p)))
    if b < 1.0:
        model += (1.0 - b) * float(np.sum(p ** (1.0 + gam)))
    py = p[y_obs]
    if py <= 0.0:
        raise ValueError("observed atom has zero probability")
    data = b * float(_expm1_ratio(a, py)) \
        + (1.0 - b) * float(_poly_data_term(gam, math.log(py)))
    return model - data
