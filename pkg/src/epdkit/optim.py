"""Damped quasi-Newton minimizer shared by the fitting routines.

BFGS inverse-Hessian updates with Armijo backtracking; every accepted step
strictly decreases the objective, so descent is monotone by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ARMIJO_C = 1e-4


class MaxIterationsError(RuntimeError):
    """Iteration budget exhausted before reaching the tolerances."""


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool


def minimize_bfgs(fun, grad, x0, *, max_iter=500, grad_tol=1e-8,
                  rel_obj_tol=1e-10) -> MinimizeResult:
    """Minimize fun with analytic gradient grad starting from x0.

    Convergence is declared on the sup-norm of the gradient; a stalled
    relative objective change also stops the loop but only counts as
    converged if the gradient tolerance is met.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    f = float(fun(x))
    g = np.asarray(grad(x), dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite objective or gradient at start")
    H = np.eye(n)
    it = 0
    restarted = False
    stalls = 0
    while it < max_iter:
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= grad_tol:
            return MinimizeResult(x, f, g, it, True)
        d = -H @ g
        slope = float(d @ g)
        if slope >= 0.0:
            # curvature estimate went bad; fall back to steepest descent
            H = np.eye(n)
            d = -g
            slope = -float(g @ g)
        step = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + step * d
            f_new = float(fun(x_new))
            if np.isfinite(f_new) and f_new <= f + ARMIJO_C * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if not restarted:
                # one identity restart before giving up on the line search
                H = np.eye(n)
                restarted = True
                it += 1
                continue
            return MinimizeResult(x, f, g, it, gnorm <= grad_tol)
        g_new = np.asarray(grad(x_new), dtype=float)
        if not np.all(np.isfinite(g_new)):
            return MinimizeResult(x, f, g, it, False)
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(yv)):
            rho = 1.0 / sy
            I = np.eye(n)
            V = I - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
        obj_drop = f - f_new
        x, f, g = x_new, f_new, g_new
        it += 1
        restarted = False
        # several consecutive stalled steps: the objective is flat at the
        # working precision AND the gradient stopped shrinking, so further
        # iterations cannot help
        stalled = (obj_drop <= rel_obj_tol * max(1.0, abs(f))
                   and float(np.max(np.abs(g))) > 0.5 * gnorm)
        stalls = stalls + 1 if stalled else 0
        if stalls >= 5:
            gnorm = float(np.max(np.abs(g)))
            return MinimizeResult(x, f, g, it, gnorm <= grad_tol)
    return MinimizeResult(x, f, g, it, float(np.max(np.abs(g))) <= grad_tol)


def numerical_gradient(fun, x, rel_step=1e-6):
    """Central finite-difference gradient with per-coordinate relative steps."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g
