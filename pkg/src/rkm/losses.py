"""Separable convex losses with resolvent and Moreau-envelope machinery.

Five per-coordinate risks are supported, each of the form
``f_i(z) = L(y_i, z) / lam``:

==========  =============================  ====================
kind        L(y, z)                        task
==========  =============================  ====================
``l1svm``   max(1 - y*z, 0)                classification
``l2svm``   max(1 - y*z, 0)**2             classification
``rls``     (y - z)**2 / 2                 regression
``rla``     |y - z|                        regression
``svr``     max(|y - z| - epsilon, 0)      regression
==========  =============================  ====================

The central object is the scaled proximal update ``resolvent_step``: for a
relaxation parameter ``alpha > 0`` it returns ``alpha * p(v / alpha) - v``
where ``p(u) = argmin_z f_i(z) + (alpha / 2) * (z - u)**2``.  Closed forms
for all five kinds were derived from that identity and are certified against
a numeric one-dimensional prox search in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOSS_KINDS = ("l1svm", "l2svm", "rls", "rla", "svr")

# Kinds whose resolvent output is clipped to magnitude 1/lam.
CLIPPED_KINDS = frozenset({"l1svm", "rla", "svr"})
# Kinds requiring labels in {-1, +1}.
CLASSIFICATION_KINDS = frozenset({"l1svm", "l2svm"})


def _as_float_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("labels must be a non-empty one-dimensional sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("labels must be finite")
    return arr


@dataclass(frozen=True)
class LossModel:
    """Empirical risk: loss kind, labels, and regularization parameters.

    Parameters
    ----------
    kind : str
        One of ``l1svm``, ``l2svm``, ``rls``, ``rla``, ``svr``.
    labels : array-like of shape (ell,)
        Targets y_i.  Must be exactly +/-1 for the SVM kinds.
    lam : float
        Regularization parameter, strictly positive.  Every per-coordinate
        risk is the raw loss divided by ``lam``.
    epsilon : float, optional
        Tube half-width for ``svr`` (required there, and only there).
    """

    kind: str
    labels: np.ndarray
    lam: float
    epsilon: float | None = field(default=None)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError("lam must be a positive finite real")
        labels = _as_float_array(self.labels)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if self.kind in CLASSIFICATION_KINDS and not np.all(np.abs(labels) == 1.0):
            raise ValueError(f"{self.kind} labels must be exactly +1 or -1")
        if self.kind == "svr":
            if self.epsilon is None:
                raise ValueError("svr requires epsilon")
            if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
                raise ValueError("epsilon must be a nonnegative finite real")
        elif self.epsilon is not None:
            raise ValueError(f"epsilon is only meaningful for svr, not {self.kind}")

    @property
    def ell(self) -> int:
        return self.labels.shape[0]

    def _eps(self) -> float:
        return 0.0 if self.epsilon is None else float(self.epsilon)

    # -- loss values ------------------------------------------------------

    def risk(self, z: np.ndarray) -> np.ndarray:
        """Per-coordinate risk values f_i(z_i) for a full prediction vector."""
        z = np.asarray(z, dtype=np.float64)
        y = self.labels
        if self.kind == "l1svm":
            return np.maximum(1.0 - y * z, 0.0) / self.lam
        if self.kind == "l2svm":
            return np.maximum(1.0 - y * z, 0.0) ** 2 / self.lam
        if self.kind == "rls":
            return (y - z) ** 2 / (2.0 * self.lam)
        if self.kind == "rla":
            return np.abs(y - z) / self.lam
        return np.maximum(np.abs(y - z) - self._eps(), 0.0) / self.lam

    def total_risk(self, z: np.ndarray) -> float:
        return float(np.sum(self.risk(z)))

    def loss_value(self, i: int, z: float) -> float:
        """Risk f_i(z) of a single coordinate."""
        self._check_index(i)
        if not np.isfinite(z):
            raise ValueError("z must be finite")
        return float(self.risk(np.full_like(self.labels, z))[i])

    # -- resolvent steps ---------------------------------------------------

    def resolvent_steps(self, alpha, v: np.ndarray) -> np.ndarray:
        """Vectorized resolvent update, one entry per coordinate.

        ``alpha`` may be a positive scalar or a per-coordinate array.
        """
        alpha = self._check_alpha(alpha)
        v = np.asarray(v, dtype=np.float64)
        y = self.labels
        lam = self.lam
        if self.kind == "rls":
            return (alpha * y - v) / (1.0 + alpha * lam)
        if self.kind == "l1svm":
            return y * np.minimum(1.0 / lam, np.maximum(alpha - y * v, 0.0))
        if self.kind == "l2svm":
            return y * 2.0 * np.maximum(alpha - y * v, 0.0) / (2.0 + alpha * lam)
        q = alpha * y - v
        if self.kind == "rla":
            return np.sign(q) * np.minimum(1.0 / lam, np.abs(q))
        return np.sign(q) * np.minimum(
            1.0 / lam, np.maximum(np.abs(q) - alpha * self._eps(), 0.0)
        )

    def resolvent_step(self, i: int, alpha: float, v: float) -> float:
        """Resolvent update for coordinate ``i`` at the scalar point ``v``."""
        self._check_index(i)
        full = self.resolvent_steps(float(alpha), np.full(self.ell, v, dtype=np.float64))
        return float(full[i])

    # -- Moreau envelope ----------------------------------------------------

    def prox_points(self, alpha, x: np.ndarray) -> np.ndarray:
        """Minimizers p(x) of f_i(z) + (alpha/2)(z - x)^2, per coordinate."""
        alpha = self._check_alpha(alpha)
        x = np.asarray(x, dtype=np.float64)
        return x + self.resolvent_steps(alpha, alpha * x) / alpha

    def moreau_envelopes(self, alpha, x: np.ndarray) -> np.ndarray:
        """Envelope values min_z f_i(z) + (alpha/2)(z - x)^2, per coordinate."""
        alpha = self._check_alpha(alpha)
        x = np.asarray(x, dtype=np.float64)
        p = self.prox_points(alpha, x)
        return self.risk(p) + 0.5 * alpha * (p - x) ** 2

    def envelope_gradients(self, alpha, x: np.ndarray) -> np.ndarray:
        """Gradients alpha * (x - p(x)) of the envelopes, per coordinate."""
        alpha = self._check_alpha(alpha)
        x = np.asarray(x, dtype=np.float64)
        return -self.resolvent_steps(alpha, alpha * x)

    def moreau_envelope(self, i: int, alpha: float, x: float) -> float:
        self._check_index(i)
        return float(self.moreau_envelopes(float(alpha), np.full(self.ell, x))[i])

    def envelope_gradient(self, i: int, alpha: float, x: float) -> float:
        self._check_index(i)
        return float(self.envelope_gradients(float(alpha), np.full(self.ell, x))[i])

    # -- subgradients --------------------------------------------------------

    def subgradient_intervals(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interval bounds [lo_i, hi_i] of the subdifferentials of f_i at z_i."""
        z = np.asarray(z, dtype=np.float64)
        y = self.labels
        lam = self.lam
        if self.kind == "rls":
            g = (z - y) / lam
            return g, g.copy()
        if self.kind == "l2svm":
            g = -2.0 * y * np.maximum(1.0 - y * z, 0.0) / lam
            return g, g.copy()
        if self.kind == "l1svm":
            m = 1.0 - y * z
            slope = -y / lam
            lo = np.where(m > 0, slope, 0.0)
            hi = lo.copy()
            kink = m == 0
            lo[kink] = np.minimum(slope, 0.0)[kink]
            hi[kink] = np.maximum(slope, 0.0)[kink]
            return lo, hi
        s = z - y
        eps = self._eps() if self.kind == "svr" else 0.0
        inner = np.abs(s) < eps
        active = np.abs(s) > eps
        slope = np.sign(s) / lam
        lo = np.where(active, slope, 0.0)
        hi = lo.copy()
        boundary = ~inner & ~active
        lo[boundary] = np.minimum(slope, 0.0)[boundary]
        hi[boundary] = np.maximum(slope, 0.0)[boundary]
        if eps == 0.0:
            # kink at s == 0 spans the full slope range
            kink = s == 0
            lo[kink] = -1.0 / lam
            hi[kink] = 1.0 / lam
        return lo, hi

    def subgradient_interval(self, i: int, z: float) -> tuple[float, float]:
        self._check_index(i)
        lo, hi = self.subgradient_intervals(np.full(self.ell, z))
        return float(lo[i]), float(hi[i])

    def lipschitz_gradient_modulus(self) -> float:
        """Lipschitz modulus of the risk gradient; inf for nonsmooth kinds."""
        if self.kind == "rls":
            return 1.0 / self.lam
        if self.kind == "l2svm":
            return 2.0 / self.lam
        return np.inf

    # -- helpers -------------------------------------------------------------

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.ell:
            raise IndexError(f"coordinate index {i} out of range for {self.ell} examples")

    @staticmethod
    def _check_alpha(alpha):
        arr = np.asarray(alpha, dtype=np.float64)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("alpha must be positive and finite")
        return arr if arr.ndim else float(arr)
