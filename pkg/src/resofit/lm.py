"""Levenberg-Marquardt minimisation of a sum of squared residuals.

Both nonlinear fits in the package go through :func:`levenberg_marquardt`
so they share one set of stopping rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

XTOL = 1e-10
FTOL = 1e-12
MAX_ITER = 200


@dataclass
class LMResult:
    x: np.ndarray
    cost: float  # 0.5 * sum(residual**2)
    residual: np.ndarray
    n_iter: int
    converged: bool
    message: str


def numeric_jacobian(fun, x, f0=None, rel_step=1e-7):
    """Forward-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = fun(x) if f0 is None else f0
    jac = np.empty((f0.size, x.size))
    for k in range(x.size):
        h = rel_step * max(1.0, abs(x[k]))
        xp = x.copy()
        xp[k] += h
        jac[:, k] = (fun(xp) - f0) / h
    return jac


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    xtol: float = XTOL,
    ftol: float = FTOL,
    max_iter: int = MAX_ITER,
) -> LMResult:
    """Minimise ``0.5 * |fun(x)|**2`` starting from ``x0``.

    Damping uses Marquardt's diagonal scaling with Nielsen's update of the
    damping factor. Iteration stops when an accepted step is smaller than
    ``xtol * (|x| + xtol)`` or lowers the cost by less than ``ftol`` relative,
    or after ``max_iter`` iterations (then ``converged`` is False).
    """
    # trial points may overflow; those steps are rejected below
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _minimise(fun, x0, jac, xtol, ftol, max_iter)


def _minimise(fun, x0, jac, xtol, ftol, max_iter):
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        return LMResult(x, cost, r, 0, False, "non-finite residual at start")
    jac = jac or (lambda p: numeric_jacobian(fun, p))

    J = jac(x)
    A = J.T @ J
    g = J.T @ r
    mu = 1e-3  # relative to diag(A), see the damped solve below
    nu = 2.0
    for it in range(1, max_iter + 1):
        if cost == 0.0 or not np.any(g):
            return LMResult(x, cost, r, it - 1, True, "zero gradient")
        d = np.maximum(np.diag(A), 1e-12 * np.max(np.diag(A)))
        try:
            h = np.linalg.solve(A + mu * np.diag(d), -g)
        except np.linalg.LinAlgError:
            h = np.linalg.lstsq(A + mu * np.diag(d), -g, rcond=None)[0]
        x_new = x + h
        try:
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new)
        except OverflowError:
            # parameters exponentiated out of range: treat as a rejected step
            cost_new = math.inf
        predicted = 0.5 * float(h @ (mu * d * h - g))
        small_step = np.linalg.norm(h) <= xtol * (np.linalg.norm(x) + xtol)
        if np.isfinite(cost_new) and cost_new < cost and predicted > 0:
            rho = (cost - cost_new) / predicted
            rel_drop = (cost - cost_new) / cost
            x, r, cost = x_new, r_new, cost_new
            if small_step or rel_drop <= ftol:
                return LMResult(x, cost, r, it, True, "converged")
            J = jac(x)
            A = J.T @ J
            g = J.T @ r
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            if small_step:
                return LMResult(x, cost, r, it, True, "no further decrease")
            mu *= nu
            nu *= 2.0
    return LMResult(x, cost, r, max_iter, False, "iteration cap reached")
