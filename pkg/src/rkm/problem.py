"""The assembled problem: objective, optimality residuals, and prediction."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .kernels import FROZEN_DIAGONAL, KernelSpec, pairwise_kernel
from .losses import LossModel

SUPPORT_THRESHOLD = 1e-12
# Incremental caches are rebuilt from scratch this often to bound fp drift.
RESYNC_INTERVAL = 10_000


@dataclass(frozen=True)
class Problem:
    """A Gram operator paired with a loss model of matching size."""

    gram: object
    loss: LossModel

    def __post_init__(self):
        if self.gram.dim != self.loss.ell:
            raise ValueError(
                f"gram dimension {self.gram.dim} does not match "
                f"{self.loss.ell} labels"
            )


def objective(problem: Problem, c: np.ndarray, threads: int = 1) -> float:
    """F(c): total risk of the predictions plus half the quadratic form."""
    c = np.asarray(c, dtype=np.float64)
    z = problem.gram.matvec(c, threads)
    return problem.loss.total_risk(z) + 0.5 * float(c @ z)


def optimality_residual(problem: Problem, c: np.ndarray, alphas) -> np.ndarray:
    """Per-coordinate fixed-point residuals of the optimality equation.

    ``r_i = c_i - resolvent_step(i, a_i, a_i * k_i^T c - c_i)``; a zero
    vector certifies optimality.  ``alphas`` is a positive scalar or a
    per-coordinate array.
    """
    c = np.asarray(c, dtype=np.float64)
    z = problem.gram.matvec(c)
    alphas = np.asarray(alphas, dtype=np.float64)
    v = alphas * z - c
    return c - problem.loss.resolvent_steps(alphas, v)


def residual_alphas(problem: Problem) -> np.ndarray:
    """Per-coordinate 1/k_ii with unit fallback on frozen coordinates."""
    d = problem.gram.diag
    safe = np.where(d > FROZEN_DIAGONAL, d, 1.0)
    return 1.0 / safe


def residual_norm(problem: Problem, c: np.ndarray, alphas) -> float:
    """Infinity norm of the optimality residual, frozen coordinates excluded."""
    r = optimality_residual(problem, c, alphas)
    live = problem.gram.diag > FROZEN_DIAGONAL
    if not np.any(live):
        return 0.0
    return float(np.max(np.abs(r[live])))


@dataclass
class SolverConfig:
    """Shared configuration for both solvers.

    ``alpha`` is a rule name (``trace``, ``spectral``, ``frobenius``) or an
    explicit positive number; explicit values are validated against the
    strict step bound before the fixed-point solver iterates.  The
    coordinate-descent solver derives its per-coordinate parameters from the
    Gram diagonal and records the resolved ``alpha`` only as metadata.
    """

    alpha: float | str = "trace"
    tol: float = 1e-6
    max_iterations: int = 10_000
    max_macro_iterations: int = 1_000
    index_rule: str = "cyclic"
    seed: int = 0
    initial_c: np.ndarray | None = None
    record_trace: bool = False
    trace_residuals: bool = False
    threads: int = 1

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1 or self.max_macro_iterations < 1:
            raise ValueError("iteration budgets must be at least 1")
        if self.index_rule not in ("cyclic", "aitken", "randomized"):
            raise ValueError(f"unknown index rule {self.index_rule!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def starting_point(self, ell: int) -> np.ndarray:
        if self.initial_c is None:
            return np.zeros(ell)
        c0 = np.array(self.initial_c, dtype=np.float64)
        if c0.shape != (ell,):
            raise ValueError(f"initial_c has shape {c0.shape}, expected ({ell},)")
        return c0


@dataclass
class SolverResult:
    """Outcome of one solver run."""

    c: np.ndarray
    objective: float
    iterations: int
    converged: bool
    residual: float
    wall_time: float
    alpha: float
    trace: list | None = None
    macro_iterations: int | None = None
    w_update_count: int | None = None


class Model:
    """A trained predictor: either a weight vector or a kernel expansion.

    Linear-kernel fits store the weight vector w = X^T c; all other kernels
    store the examples with coefficient magnitude above 1e-12 together with
    their coefficients and labels.
    """

    def __init__(
        self,
        loss_kind: str,
        lam: float,
        epsilon: float | None,
        kernel: KernelSpec,
        alpha: float,
        converged: bool,
        w: np.ndarray | None = None,
        sv_coef: np.ndarray | None = None,
        sv_labels: np.ndarray | None = None,
        sv_rows=None,
    ):
        if (w is None) == (sv_coef is None):
            raise ValueError("model stores exactly one of: weight vector, support list")
        if kernel.kind == "linear" and w is None:
            raise ValueError("linear-kernel models store the weight vector")
        if kernel.kind != "linear" and w is not None:
            raise ValueError(f"{kernel.kind}-kernel models store the support list")
        self.loss_kind = loss_kind
        self.lam = float(lam)
        self.epsilon = None if epsilon is None else float(epsilon)
        self.kernel = kernel
        self.alpha = float(alpha)
        self.converged = bool(converged)
        self.w = None if w is None else np.asarray(w, dtype=np.float64)
        self.sv_coef = None if sv_coef is None else np.asarray(sv_coef, dtype=np.float64)
        self.sv_labels = None if sv_labels is None else np.asarray(sv_labels, dtype=np.float64)
        self.sv_rows = sv_rows

    @property
    def is_linear(self) -> bool:
        return self.w is not None

    @classmethod
    def from_solution(
        cls,
        X,
        loss: LossModel,
        kernel: KernelSpec,
        c: np.ndarray,
        alpha: float,
        converged: bool,
    ) -> "Model":
        c = np.asarray(c, dtype=np.float64)
        if kernel.kind == "linear":
            Xw = X.tocsr() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
            w = np.asarray(Xw.T @ c, dtype=np.float64).ravel()
            return cls(loss.kind, loss.lam, loss.epsilon, kernel, alpha, converged, w=w)
        keep = np.abs(c) > SUPPORT_THRESHOLD
        rows = X.tocsr()[keep] if sp.issparse(X) else np.asarray(X, dtype=np.float64)[keep]
        return cls(
            loss.kind,
            loss.lam,
            loss.epsilon,
            kernel,
            alpha,
            converged,
            sv_coef=c[keep],
            sv_labels=loss.labels[keep],
            sv_rows=rows,
        )

    def decision_values(self, X) -> np.ndarray:
        """Raw predictions g(x) for each row of X."""
        if self.is_linear:
            Xq = X.tocsr() if sp.issparse(X) else np.atleast_2d(np.asarray(X, dtype=np.float64))
            n = self.w.shape[0]
            if Xq.shape[1] != n:
                raise ValueError(
                    f"feature dimension {Xq.shape[1]} does not match weight vector length {n}"
                )
            return np.asarray(Xq @ self.w, dtype=np.float64).ravel()
        if self.sv_coef.size == 0:
            rows = 1 if not hasattr(X, "shape") or len(getattr(X, "shape", ())) < 2 else X.shape[0]
            return np.zeros(rows)
        block = pairwise_kernel(self.kernel, X, self.sv_rows)
        return block @ self.sv_coef

    def predict_one(self, x) -> float:
        return float(self.decision_values(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])
