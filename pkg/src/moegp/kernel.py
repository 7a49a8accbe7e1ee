"""Isotropic squared-exponential covariance.

    k(a, b) = s * exp(-|a - b|^2 / (2 l^2))

with lengthscale ``l`` and signal variance ``s``. Both are stored as logs so
that unconstrained optimizers can move them freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from .errors import InvalidArgumentError, NumericalError

JITTER = 1e-8
MAX_JITTER = 1e-4


@dataclass(frozen=True)
class KernelParams:
    log_lengthscale: float
    log_signal_variance: float

    @classmethod
    def from_natural(cls, lengthscale, signal_variance):
        if not (lengthscale > 0 and signal_variance > 0):
            raise InvalidArgumentError("lengthscale and signal_variance must be positive")
        return cls(float(np.log(lengthscale)), float(np.log(signal_variance)))

    @property
    def lengthscale(self) -> float:
        return float(np.exp(self.log_lengthscale))

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.log_signal_variance))


def _as_rows(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise InvalidArgumentError(f"expected a 2-D array, got shape {A.shape}")
    return A


def sq_dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def kernel_eval(params: KernelParams, a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    r2 = float(np.sum((a - b) ** 2))
    return params.signal_variance * float(np.exp(-0.5 * r2 / params.lengthscale**2))


def kernel_matrix(params: KernelParams, A, B) -> np.ndarray:
    """Covariance between the rows of ``A`` (n x d) and ``B`` (m x d)."""
    A, B = _as_rows(A), _as_rows(B)
    if A.shape[1] != B.shape[1]:
        raise InvalidArgumentError(
            f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    if A is B:
        d2 = sq_dist(A, A)
        np.fill_diagonal(d2, 0.0)
    else:
        d2 = sq_dist(A, B)
    return params.signal_variance * np.exp(-0.5 * d2 / params.lengthscale**2)


def kernel_diag(params: KernelParams, A) -> np.ndarray:
    A = _as_rows(A)
    return np.full(A.shape[0], params.signal_variance)


def kernel_grads(params: KernelParams, A, B) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of ``kernel_matrix(params, A, B)`` w.r.t. the log-parameters.

    Returns ``(dK/dlog_lengthscale, dK/dlog_signal_variance)``.
    """
    A, B = _as_rows(A), _as_rows(B)
    d2 = sq_dist(A, B)
    ell2 = params.lengthscale**2
    K = params.signal_variance * np.exp(-0.5 * d2 / ell2)
    return K * d2 / ell2, K


def stable_cholesky(K: np.ndarray, scale: float, always_jitter=True) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + jitter * scale * I``.

    Jitter starts at 1e-8 * scale and grows tenfold up to 1e-4 * scale. With
    ``always_jitter=False`` an unjittered factorization is tried first (for
    matrices that are well conditioned by construction).
    Returns ``(L, jitter_used)``; raises NumericalError when every level fails.
    """
    n = K.shape[0]
    rel = JITTER if always_jitter else 0.0
    while rel <= MAX_JITTER * (1 + 1e-9):
        try:
            L = cholesky(K + (rel * scale) * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, rel * scale
        except LinAlgError:
            pass
        rel = rel * 10.0 if rel else JITTER
    raise NumericalError("Cholesky factorization failed after jitter escalation")
