"""Simultaneous fixed-point (Jacobi) solver with contraction diagnostics."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kernels import alpha_from_rule
from .problem import Problem, SolverConfig, SolverResult, objective, residual_norm


class JacobiTraceRow(NamedTuple):
    iteration: int
    objective: float
    step_norm: float
    wall_ms: float
    residual: float | None = None


@dataclass(frozen=True)
class ConvergenceEstimate:
    """Contraction diagnostics for the simultaneous update map.

    ``mu1`` is the spectral deviation max_i |1 - alpha * eig_i|, ``mu2`` the
    resolvent contraction factor (1 + 1/L^2)^(-1/2) from the gradient
    Lipschitz modulus L, and ``mu = mu1 * mu2`` the per-step rate bound when
    it is below one.  ``beta`` is the descent margin min over positive
    eigenvalues of alpha*eig*(2 - alpha*eig), reported as a diagnostic.
    """

    mu1: float
    mu2: float
    mu: float
    lipschitz: float
    beta: float


def _resolve_alpha(problem: Problem, config: SolverConfig) -> float:
    alpha = alpha_from_rule(problem.gram, config.alpha)
    if not isinstance(config.alpha, str):
        bound = 2.0 / problem.gram.spectral_norm()
        if not alpha < bound:
            raise ValueError(
                f"alpha = {alpha:g} violates the strict step bound "
                f"0 < alpha < {bound:g}"
            )
    return alpha


def solve(problem: Problem, config: SolverConfig) -> SolverResult:
    """Iterate the simultaneous resolvent update until the iterate settles.

    Each pass computes z = K c, v = alpha*z - c, and the coordinate-wise
    resolvent step, stopping when the sup-norm change of c drops to the
    configured tolerance.  A non-convergent run returns its best iterate
    with ``converged=False`` rather than raising.
    """
    gram, loss = problem.gram, problem.loss
    alpha = _resolve_alpha(problem, config)
    c = config.starting_point(gram.dim)
    trace: list[JacobiTraceRow] | None = [] if config.record_trace else None
    start = time.perf_counter()
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        z = gram.matvec(c, config.threads)
        v = alpha * z - c
        c_next = loss.resolvent_steps(alpha, v)
        step = float(np.max(np.abs(c_next - c)))
        c = c_next
        if trace is not None:
            row = JacobiTraceRow(
                iterations,
                objective(problem, c, config.threads),
                step,
                1e3 * (time.perf_counter() - start),
                residual_norm(problem, c, alpha) if config.trace_residuals else None,
            )
            trace.append(row)
        if step <= config.tol:
            converged = True
            break
    wall = time.perf_counter() - start
    return SolverResult(
        c=c,
        objective=objective(problem, c, config.threads),
        iterations=iterations,
        converged=converged,
        residual=residual_norm(problem, c, alpha),
        wall_time=wall,
        alpha=alpha,
        trace=trace,
    )


def contraction_estimate(gram, alpha: float, loss, max_size: int = 2000) -> ConvergenceEstimate:
    """Contraction diagnostics from the full Gram spectrum.

    Dense operators are eigendecomposed directly; factored ones through
    the feature-space product, padding with the implied zero eigenvalues.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    ell = gram.dim
    if gram.is_factored:
        X = gram.design
        small = min(ell, gram.n_features)
        if small > max_size:
            raise ValueError(f"eigendecomposition budget exceeded: {small} > {max_size}")
        if gram.n_features <= ell:
            G = X.T @ X
        else:
            G = X @ X.T
        if hasattr(G, "toarray"):
            G = G.toarray()
        eigs = np.linalg.eigvalsh(np.asarray(G, dtype=np.float64))
        eigs = np.concatenate([np.zeros(ell - eigs.size), eigs]) if eigs.size < ell else eigs
    else:
        if ell > max_size:
            raise ValueError(f"eigendecomposition budget exceeded: {ell} > {max_size}")
        eigs = np.linalg.eigvalsh(gram.densify())
    eigs = np.maximum(eigs, 0.0)
    mu1 = float(np.max(np.abs(1.0 - alpha * eigs)))
    lipschitz = loss.lipschitz_gradient_modulus()
    mu2 = 1.0 if np.isinf(lipschitz) else float(1.0 / np.sqrt(1.0 + 1.0 / lipschitz**2))
    top = float(np.max(eigs))
    positive = eigs[eigs > 1e-12 * max(top, 1.0)]
    if positive.size == 0:
        raise ValueError("kernel matrix is numerically null")
    beta = float(np.min(alpha * positive * (2.0 - alpha * positive)))
    return ConvergenceEstimate(mu1=mu1, mu2=mu2, mu=mu1 * mu2, lipschitz=lipschitz, beta=beta)
