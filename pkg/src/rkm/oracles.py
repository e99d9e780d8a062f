"""Independent brute-force references used by tests and the check command.

Nothing here shares code paths with the solvers: the one-dimensional prox is
found by golden-section search, the least-squares optimum by a dense
factorization, and the generic reference minimizer by plain subgradient
descent.  They exist to certify the closed forms, never to replace them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .losses import LossModel
from .problem import Problem, objective

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OracleConfig:
    """Numeric search parameters for the brute-force references."""

    termination_width: float = 1e-10
    subgradient_budget: int = 100_000

    def __post_init__(self):
        if self.termination_width <= 0:
            raise ValueError("termination_width must be positive")
        if self.subgradient_budget < 0:
            raise ValueError("subgradient_budget must be nonnegative")


def prox_1d(loss: LossModel, i: int, alpha: float, u: float, width: float = 1e-10) -> float:
    """argmin_z  f_i(z) + (alpha/2)(z - u)^2  by golden-section search.

    The objective is strictly convex, so the minimizer is unique; the search
    bracket is wide enough to contain it for every supported loss kind.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    y = float(loss.labels[i])
    eps = 0.0 if loss.epsilon is None else float(loss.epsilon)
    radius = 10.0 + 2.0 * abs(u) + 2.0 * abs(y) + 2.0 / (alpha * loss.lam) + 2.0 * eps
    a = min(u, y) - radius
    b = max(u, y) + radius

    def g(z: float) -> float:
        return loss.loss_value(i, z) + 0.5 * alpha * (z - u) ** 2

    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    while b - a > width:
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - _INV_GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _INV_GOLDEN * (b - a)
            gd = g(d)
    return 0.5 * (a + b)


def rls_closed_form(gram, y, lam: float, max_size: int = 2000) -> np.ndarray:
    """Solve (K + lam*I) c = y by a dense Cholesky factorization."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    y = np.asarray(y, dtype=np.float64)
    if gram.dim > max_size:
        raise ValueError(f"dense solve budget exceeded: {gram.dim} > {max_size}")
    system = gram.densify() + lam * np.eye(gram.dim)
    factor = scipy.linalg.cho_factor(system, lower=True)
    c = scipy.linalg.cho_solve(factor, y)
    scale = np.max(np.abs(y)) if y.size else 0.0
    resid = system @ c - y
    if scale > 0 and np.max(np.abs(resid)) > 1e-10 * scale:
        c = c - scipy.linalg.cho_solve(factor, resid)
    return c


def reference_minimizer(
    problem: Problem,
    budget: int,
    seed: int,
    initial_c: np.ndarray | None = None,
) -> np.ndarray:
    """Crude subgradient descent on the objective; returns the best iterate.

    Serves only as a certified upper bound on the optimal value.  Steps
    follow the diminishing schedule s/sqrt(k) with s = 1/(1 + tr(K)); at
    nondifferentiable points the subgradient is drawn uniformly from the
    subdifferential interval using the supplied seed.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    gram, loss = problem.gram, problem.loss
    rng = np.random.default_rng(seed)
    c = np.zeros(gram.dim) if initial_c is None else np.array(initial_c, dtype=np.float64)
    best_c = c.copy()
    best_f = objective(problem, c)
    s = 1.0 / (1.0 + gram.trace)
    for k in range(1, budget + 1):
        z = gram.matvec(c)
        lo, hi = loss.subgradient_intervals(z)
        g = lo.copy()
        kinks = hi > lo
        if np.any(kinks):
            g[kinks] = lo[kinks] + rng.uniform(size=int(kinks.sum())) * (hi - lo)[kinks]
        f_now = loss.total_risk(z) + 0.5 * float(c @ z)
        if f_now < best_f:
            best_f = f_now
            best_c = c.copy()
        c = c - (s / np.sqrt(k)) * gram.matvec(g + c)
    f_final = objective(problem, c)
    if f_final < best_f:
        best_c = c
    return best_c
