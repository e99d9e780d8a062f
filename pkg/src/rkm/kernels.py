"""Kernel functions, Gram operators, and step-size selection rules."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

KERNEL_KINDS = ("linear", "gaussian", "polynomial")

SYMMETRY_RTOL = 1e-9
FROZEN_DIAGONAL = 1e-12
DEFAULT_DENSE_BYTES = 4 << 30


class GramValidationError(ValueError):
    """A dense kernel matrix failed a structural sanity check."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel function choice and parameters.

    Conventions: ``gaussian`` is exp(-gamma * ||x - x'||^2); ``polynomial``
    is (scale * <x, x'> + coef0) ** degree.
    """

    kind: str
    gamma: float | None = None
    degree: int | None = None
    coef0: float | None = None
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind == "linear":
            if any(v is not None for v in (self.gamma, self.degree, self.coef0, self.scale)):
                raise ValueError("linear kernel takes no parameters")
        elif self.kind == "gaussian":
            if self.gamma is None or not (np.isfinite(self.gamma) and self.gamma > 0):
                raise ValueError("gaussian kernel requires gamma > 0")
            if any(v is not None for v in (self.degree, self.coef0, self.scale)):
                raise ValueError("gaussian kernel takes only gamma")
        else:
            if self.degree is None or int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("polynomial kernel requires a positive integer degree")
            object.__setattr__(self, "degree", int(self.degree))
            object.__setattr__(self, "coef0", 0.0 if self.coef0 is None else float(self.coef0))
            object.__setattr__(self, "scale", 1.0 if self.scale is None else float(self.scale))
            if self.coef0 < 0:
                raise ValueError("polynomial coef0 must be nonnegative")
            if not self.scale > 0:
                raise ValueError("polynomial scale must be positive")
            if self.gamma is not None:
                raise ValueError("polynomial kernel takes degree, coef0, scale")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def gaussian(cls, gamma: float) -> "KernelSpec":
        return cls("gaussian", gamma=float(gamma))

    @classmethod
    def polynomial(cls, degree: int, coef0: float = 0.0, scale: float = 1.0) -> "KernelSpec":
        return cls("polynomial", degree=degree, coef0=coef0, scale=scale)

    def describe(self) -> str:
        """Single-line textual form used by the model file format."""
        if self.kind == "linear":
            return "linear"
        if self.kind == "gaussian":
            return f"gaussian {self.gamma:.17g}"
        return f"polynomial {self.degree} {self.coef0:.17g} {self.scale:.17g}"

    @classmethod
    def from_description(cls, text: str) -> "KernelSpec":
        parts = text.split()
        try:
            if parts[0] == "linear" and len(parts) == 1:
                return cls.linear()
            if parts[0] == "gaussian" and len(parts) == 2:
                return cls.gaussian(float(parts[1]))
            if parts[0] == "polynomial" and len(parts) == 4:
                return cls.polynomial(int(parts[1]), float(parts[2]), float(parts[3]))
        except (ValueError, IndexError):
            pass
        raise ValueError(f"unparseable kernel description: {text!r}")


def _pad_pair(x1, x2) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x1, dtype=np.float64).ravel()
    b = np.asarray(x2, dtype=np.float64).ravel()
    if a.size != b.size:
        n = max(a.size, b.size)
        a = np.pad(a, (0, n - a.size))
        b = np.pad(b, (0, n - b.size))
    return a, b


def kernel_eval(spec: KernelSpec, x1, x2) -> float:
    """Evaluate the kernel on a pair of feature vectors.

    Vectors of unequal length are aligned by treating missing trailing
    entries as zeros, matching the sparse-row convention.
    """
    a, b = _pad_pair(x1, x2)
    if spec.kind == "linear":
        return float(a @ b)
    if spec.kind == "gaussian":
        d = a - b
        return float(np.exp(-spec.gamma * (d @ d)))
    return float((spec.scale * (a @ b) + spec.coef0) ** spec.degree)


def pairwise_kernel(spec: KernelSpec, A, B) -> np.ndarray:
    """Dense kernel block K[i, j] = K(A_i, B_j) for row matrices A, B."""
    A = _as_row_matrix(A)
    B = _as_row_matrix(B)
    na, nb = A.shape[1], B.shape[1]
    if na != nb:
        n = max(na, nb)
        A = _pad_columns(A, n)
        B = _pad_columns(B, n)
    G = A @ B.T
    if sp.issparse(G):
        G = G.toarray()
    G = np.asarray(G, dtype=np.float64)
    if spec.kind == "linear":
        return G
    if spec.kind == "gaussian":
        sa = _row_sqnorms(A)
        sb = _row_sqnorms(B)
        d2 = np.maximum(sa[:, None] + sb[None, :] - 2.0 * G, 0.0)
        return np.exp(-spec.gamma * d2)
    return (spec.scale * G + spec.coef0) ** spec.degree


def _as_row_matrix(X):
    if sp.issparse(X):
        return X.tocsr()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


def _pad_columns(X, n: int):
    if X.shape[1] == n:
        return X
    if sp.issparse(X):
        return sp.hstack(
            [X, sp.csr_matrix((X.shape[0], n - X.shape[1]))], format="csr"
        )
    return np.pad(X, ((0, 0), (0, n - X.shape[1])))


def _row_sqnorms(X) -> np.ndarray:
    if sp.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", X, X)


def _chunked_rows(apply_rows, dim: int, threads: int) -> np.ndarray:
    chunk = (dim + threads - 1) // threads
    bounds = [(s, min(s + chunk, dim)) for s in range(0, dim, chunk)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda b: apply_rows(b[0], b[1]), bounds))
    return np.concatenate(parts)


class DenseGram:
    """An explicitly stored symmetric PSD kernel matrix.

    The matrix is validated, not repaired: asymmetry beyond a relative
    1e-9, a negative diagonal entry, or an entry violating
    |k_ij| <= sqrt(k_ii * k_jj) is reported as an error rather than
    silently patched.
    """

    is_factored = False

    def __init__(self, matrix, *, validate: bool = True):
        m = np.array(matrix, dtype=np.float64, order="C")
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise GramValidationError("kernel matrix must be square and nonempty")
        if validate:
            scale = max(1.0, float(np.max(np.abs(m))))
            skew = float(np.max(np.abs(m - m.T)))
            if skew > SYMMETRY_RTOL * scale:
                raise GramValidationError(
                    f"kernel matrix asymmetric: max |K - K^T| = {skew:g} "
                    f"exceeds {SYMMETRY_RTOL:g} relative"
                )
            d = np.diagonal(m)
            if np.any(d < -SYMMETRY_RTOL * scale):
                raise GramValidationError("kernel matrix has a negative diagonal entry")
            bound = np.sqrt(np.outer(np.maximum(d, 0.0), np.maximum(d, 0.0)))
            if np.any(np.abs(m) > bound + SYMMETRY_RTOL * scale):
                raise GramValidationError(
                    "kernel matrix entry exceeds sqrt(k_ii * k_jj); not positive semidefinite"
                )
        self._m = m
        self.diag = np.diagonal(m).copy()
        self.diag.setflags(write=False)
        self.trace = float(np.sum(self.diag))
        self._spectral: float | None = None

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def column(self, i: int) -> np.ndarray:
        # rows equal columns by symmetry; rows are the contiguous axis
        return self._m[i]

    def matvec(self, c: np.ndarray, threads: int = 1) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (self.dim,):
            raise ValueError(f"coefficient vector has length {c.shape}, expected {self.dim}")
        if threads <= 1:
            return self._m @ c
        return _chunked_rows(lambda s, e: self._m[s:e] @ c, self.dim, threads)

    def densify(self) -> np.ndarray:
        return self._m.copy()

    def spectral_norm(self) -> float:
        if self._spectral is None:
            self._spectral = _power_iteration(lambda v: self._m @ v, self.dim)
        return self._spectral


class FactoredGram:
    """The linear-kernel Gram K = X X^T kept in factored form.

    The full ell x ell matrix is never materialized; products go through
    the design matrix in two stages.
    """

    is_factored = True

    def __init__(self, design):
        if sp.issparse(design):
            X = design.tocsr().astype(np.float64)
        else:
            X = np.asarray(design, dtype=np.float64)
            if X.ndim != 2:
                raise ValueError("design matrix must be two-dimensional")
        if X.shape[0] == 0:
            raise ValueError("design matrix must have at least one row")
        self._x = X
        self.diag = _row_sqnorms(X)
        self.diag.setflags(write=False)
        self.trace = float(np.sum(self.diag))
        self._spectral: float | None = None

    @property
    def dim(self) -> int:
        return self._x.shape[0]

    @property
    def n_features(self) -> int:
        return self._x.shape[1]

    @property
    def design(self):
        return self._x

    def column(self, i: int) -> np.ndarray:
        xi = self._x[i]
        out = self._x @ (xi.T if sp.issparse(xi) else xi)
        if sp.issparse(out):
            out = out.toarray().ravel()
        return np.asarray(out, dtype=np.float64).ravel()

    def weight_vector(self, c: np.ndarray) -> np.ndarray:
        out = self._x.T @ np.asarray(c, dtype=np.float64)
        return np.asarray(out, dtype=np.float64).ravel()

    def matvec(self, c: np.ndarray, threads: int = 1) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (self.dim,):
            raise ValueError(f"coefficient vector has length {c.shape}, expected {self.dim}")
        w = self.weight_vector(c)
        if threads <= 1 or sp.issparse(self._x):
            out = self._x @ w
            return np.asarray(out, dtype=np.float64).ravel()
        return _chunked_rows(lambda s, e: self._x[s:e] @ w, self.dim, threads)

    def densify(self) -> np.ndarray:
        G = self._x @ self._x.T
        if sp.issparse(G):
            G = G.toarray()
        G = np.asarray(G, dtype=np.float64)
        return np.triu(G) + np.triu(G, 1).T

    def spectral_norm(self) -> float:
        # ||X X^T||_2 == ||X^T X||_2; iterate in feature space
        if self._spectral is None:
            X = self._x

            def apply(v):
                out = X.T @ (X @ v)
                return np.asarray(out, dtype=np.float64).ravel()

            self._spectral = _power_iteration(apply, self.n_features)
        return self._spectral


def _power_iteration(apply, dim: int, max_iter: int = 500, rtol: float = 1e-10) -> float:
    """Largest eigenvalue of a symmetric PSD operator, deterministically.

    Starts from the normalized all-ones vector; falls back to canonical
    basis vectors if the iterate is annihilated.
    """
    q = np.full(dim, 1.0 / np.sqrt(dim))
    basis_tried = 0
    rho_prev = None
    for _ in range(max_iter):
        aq = apply(q)
        norm = float(np.linalg.norm(aq))
        if norm <= 0.0:
            if basis_tried >= dim:
                return 0.0
            q = np.zeros(dim)
            q[basis_tried] = 1.0
            basis_tried += 1
            rho_prev = None
            continue
        rho = float(q @ aq)
        if rho_prev is not None and abs(rho - rho_prev) <= rtol * abs(rho):
            return rho
        rho_prev = rho
        q = aq / norm
    return rho_prev if rho_prev is not None else 0.0


def build_gram(X, spec: KernelSpec, *, max_bytes: int = DEFAULT_DENSE_BYTES):
    """Build the Gram operator for a design matrix under a kernel spec.

    Linear kernels stay factored; all others are materialized densely,
    with each pair computed once and mirrored so symmetry is exact.
    """
    X = _as_row_matrix(X)
    ell = X.shape[0]
    if ell == 0:
        raise ValueError("dataset must be nonempty")
    if spec.kind == "linear":
        return FactoredGram(X)
    needed = 8 * ell * ell
    if needed > max_bytes:
        raise MemoryError(
            f"dense kernel matrix needs {needed} bytes for {ell} examples, "
            f"budget is {max_bytes}"
        )
    K = pairwise_kernel(spec, X, X)
    if spec.kind == "gaussian":
        np.fill_diagonal(K, 1.0)
    K = np.triu(K) + np.triu(K, 1).T
    return DenseGram(K, validate=False)


def alpha_from_rule(gram, rule) -> float:
    """Resolve a relaxation-parameter rule to a concrete positive value.

    ``trace`` gives 1/tr(K); ``spectral`` gives 1/||K||_2 via power
    iteration; ``frobenius`` gives 1/||X||_F^2 and requires the factored
    form.  A numeric rule passes through unchanged (validated by the
    caller against the admissible-step bound).
    """
    if isinstance(rule, str):
        if rule == "trace":
            if gram.trace <= 0:
                raise ValueError("trace rule undefined: null kernel matrix")
            return 1.0 / gram.trace
        if rule == "spectral":
            norm = gram.spectral_norm()
            if norm <= 0:
                raise ValueError("spectral rule undefined: null kernel matrix")
            return 1.0 / norm
        if rule == "frobenius":
            if not gram.is_factored:
                raise ValueError("frobenius rule requires the factored (linear) form")
            if gram.trace <= 0:
                raise ValueError("frobenius rule undefined: null design matrix")
            return 1.0 / gram.trace
        raise ValueError(f"unknown alpha rule {rule!r}")
    value = float(rule)
    if not (np.isfinite(value) and value > 0):
        raise ValueError("explicit alpha must be positive and finite")
    return value
