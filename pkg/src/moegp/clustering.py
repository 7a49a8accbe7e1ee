"""Joint (x, y) k-means for the cluster step of CCR, and elbow selection of L.

Rows are put in a canonical (lexicographic) order before seeding, so the
clustering depends on the set of points and the seed but not on row order.
Labels are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .kernel import sq_dist


@dataclass(frozen=True)
class ClusterConfig:
    output_weight: float = 10.0
    max_iters: int = 100
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.output_weight > 0:
            raise InvalidArgumentError("output_weight must be positive")
        if self.max_iters < 1 or self.restarts < 1:
            raise InvalidArgumentError("max_iters and restarts must be positive")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    def transform(self, M):
        return (np.asarray(M, dtype=float) - self.mean) / self.scale

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean


def standardize(M):
    """Center and scale each column to unit (population) sd.

    Constant columns map to zero; their scale is recorded as 1.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.shape[0] < 1:
        raise InvalidArgumentError("need at least one row")
    mean = M.mean(0)
    sd = M.std(0)
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, sd)
    st = Standardizer(mean, scale, constant)
    Z = st.transform(M)
    Z[:, constant] = 0.0
    return Z, st


def build_joint_features(X, y, cfg: ClusterConfig = ClusterConfig()):
    """Standardized inputs followed by the standardized output times ``output_weight``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise InvalidArgumentError("X and y lengths differ")
    Zx, _ = standardize(X)
    Zy, _ = standardize(y)
    return np.hstack([Zx, cfg.output_weight * Zy])


def _plus_plus(P, L, rng):
    n = P.shape[0]
    centers = np.empty((L, P.shape[1]))
    centers[0] = P[rng.integers(n)]
    d2 = np.sum((P - centers[0]) ** 2, axis=1)
    for k in range(1, L):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[k] = P[idx]
        d2 = np.minimum(d2, np.sum((P - centers[k]) ** 2, axis=1))
    return centers


def lloyd(P, centers, max_iters):
    """Lloyd iterations from ``centers``.

    Returns ``(labels, centers, inertia, history)`` where ``history`` holds the
    inertia after every centre update. Empty clusters are re-seeded with the
    point farthest from its assigned centre.
    """
    centers = centers.copy()
    L = centers.shape[0]
    labels = None
    history = []
    for _ in range(max_iters):
        d2 = sq_dist(P, centers)
        new = np.argmin(d2, axis=1)
        for k in range(L):
            if not np.any(new == k):
                own = d2[np.arange(P.shape[0]), new]
                # never empty another cluster to fill this one
                own[np.bincount(new, minlength=L)[new] <= 1] = -1.0
                far = int(np.argmax(own))
                new[far] = k
        for k in range(L):
            centers[k] = P[new == k].mean(0)
        inertia = float(np.sum((P - centers[new]) ** 2))
        history.append(inertia)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    labels = np.argmin(sq_dist(P, centers), axis=1) if labels is None else labels
    return labels, centers, history[-1], history


def kmeans(P, L, cfg: ClusterConfig = ClusterConfig()):
    """k-means++ seeded Lloyd's algorithm, best of ``cfg.restarts`` by inertia.

    Returns ``(labels, centers, inertia)`` with labels in ``0..L-1``, every
    cluster nonempty, and clusters numbered in lexicographic order of their
    centres.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    n = P.shape[0]
    if not 1 <= L <= n:
        raise InvalidArgumentError(f"need 1 <= L <= N, got L={L}, N={n}")
    order = np.lexsort(P.T[::-1])
    Pc = P[order]
    best = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        labels, centers, inertia, _ = lloyd(Pc, _plus_plus(Pc, L, rng), cfg.max_iters)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    labels, centers, inertia = best
    rank = np.lexsort(centers.T[::-1])
    relabel = np.empty(L, dtype=int)
    relabel[rank] = np.arange(L)
    out = np.empty(n, dtype=int)
    out[order] = relabel[labels]
    return out, centers[rank], inertia


def elbow_from_inertia(inertias, L_values):
    """The L with the largest second difference of the inertia curve.

    Ties go to the smallest L; with fewer than three values the smallest L is
    returned.
    """
    I = np.asarray(inertias, dtype=float)
    L_values = list(L_values)
    if len(L_values) < 3:
        return L_values[0]
    second = I[:-2] - 2.0 * I[1:-1] + I[2:]
    return L_values[1 + int(np.argmax(second))]


def _reference_inertias(P, L_values, cfg):
    # Gaussian with the data's mean and covariance: a curve with no knee
    rng = np.random.default_rng([cfg.seed, 7919])
    cov = np.atleast_2d(np.cov(P, rowvar=False))
    R = rng.multivariate_normal(P.mean(0), cov, size=P.shape[0], method="eigh")
    return [kmeans(R, L, cfg)[2] for L in L_values]


def elbow_select_L(X, y, L_range, cfg: ClusterConfig = ClusterConfig(),
                   min_gain=0.1):
    """Pick the number of experts at the knee of the joint k-means inertia curve.

    A knee only counts if, at that L, the data's relative inertia reduction
    beats that of a single Gaussian with matching covariance by at least
    ``min_gain`` in log units; otherwise the smallest L is returned.
    """
    L_values = sorted(int(L) for L in L_range)
    if not L_values:
        raise InvalidArgumentError("L_range is empty")
    P = build_joint_features(X, y, cfg)
    inertias = [kmeans(P, L, cfg)[2] for L in L_values]
    L_knee = elbow_from_inertia(inertias, L_values)
    if L_knee == L_values[0]:
        return L_knee
    ref = _reference_inertias(P, L_values, cfg)
    k = L_values.index(L_knee)
    gain = np.log(ref[k] / ref[0]) - np.log(inertias[k] / inertias[0])
    return L_knee if gain >= min_gain else L_values[0]
