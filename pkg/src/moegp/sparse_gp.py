"""Sparse GP experts under the fully independent training conditional (FITC).

An expert has a constant mean, an isotropic squared-exponential kernel, a
noise variance and ``M`` pseudo-inputs with their pseudo-targets. Its
hyperparameters and pseudo-inputs are fitted by gradient ascent on the FITC
log marginal likelihood; pseudo-targets are then set to their posterior mean.

Everything is computed through M x M factorizations; the N x N FITC
covariance is never formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import InvalidArgumentError, NumericalError
from .kernel import KernelParams, kernel_matrix, sq_dist, stable_cholesky
from .optim import Adam

LOG_2PI = math.log(2.0 * math.pi)
# smallest cluster that gets hyperparameter optimization
MIN_OPTIMIZED_SIZE = 4


@dataclass(frozen=True)
class ExpertFitConfig:
    max_evals: int = 200
    learning_rate: float = 0.05
    tol: float = 1e-5
    optimize_inducing: bool = True
    # "fd" is only meant for testing the analytic route
    gradient: str = "analytic"


@dataclass(frozen=True, eq=False)
class SparseGPExpert:
    mean: float
    kernel: KernelParams
    log_noise_variance: float
    pseudo_inputs: np.ndarray
    pseudo_targets: np.ndarray
    # diagnostics from fitting, not part of the model
    objective_trace: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        Xu = np.atleast_2d(np.asarray(self.pseudo_inputs, dtype=float))
        fu = np.asarray(self.pseudo_targets, dtype=float).ravel()
        if Xu.shape[0] != fu.shape[0] or Xu.shape[0] < 1:
            raise InvalidArgumentError("pseudo_inputs and pseudo_targets disagree in length")
        object.__setattr__(self, "pseudo_inputs", Xu)
        object.__setattr__(self, "pseudo_targets", fu)

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.log_noise_variance))

    @property
    def num_inducing(self) -> int:
        return self.pseudo_inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.pseudo_inputs.shape[1]

    @cached_property
    def _chol(self):
        K = kernel_matrix(self.kernel, self.pseudo_inputs, self.pseudo_inputs)
        L, _ = stable_cholesky(K, self.kernel.signal_variance)
        return L

    @cached_property
    def _weights(self):
        # K_MM^{-1} (f - mu)
        return cho_solve((self._chol, True), self.pseudo_targets - self.mean)


@dataclass(frozen=True)
class FitcIntermediates:
    K_MM: np.ndarray
    K_MN: np.ndarray
    Lambda: np.ndarray
    Q_MM: np.ndarray


def inducing_count(n: int, max_inducing: int = 64) -> int:
    """Number of pseudo-inputs for a cluster of ``n`` points."""
    return int(min(n, max(8, math.ceil(2.0 * math.sqrt(n))), max_inducing))


def _check_data(X, y, dim=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidArgumentError(f"X {X.shape} and y {y.shape} disagree")
    if X.shape[0] < 1:
        raise InvalidArgumentError("need at least one data point")
    if dim is not None and X.shape[1] != dim:
        raise InvalidArgumentError(f"expected {dim} input columns, got {X.shape[1]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite values in X or y")
    return X, y


class _Fitc:
    """FITC quantities shared by the likelihood, its gradient and the posterior."""

    def __init__(self, mean, kernel, noise, Xu, X, y):
        self.mean, self.kernel, self.noise = mean, kernel, noise
        self.Xu, self.X, self.y = Xu, X, y
        s = kernel.signal_variance
        self.Kuu = kernel_matrix(kernel, Xu, Xu)
        self.L, self.jitter = stable_cholesky(self.Kuu, s)
        self.Kuf = kernel_matrix(kernel, Xu, X)
        self.V = solve_triangular(self.L, self.Kuf, lower=True, check_finite=False)
        self.Lam = np.maximum(s - np.einsum("mn,mn->n", self.V, self.V), 0.0)
        self.D = self.Lam + noise
        self.Vd = self.V / self.D
        M = Xu.shape[0]
        self.A = np.eye(M) + self.Vd @ self.V.T
        self.LA, _ = stable_cholesky(self.A, 1.0, always_jitter=False)
        self.r = y - mean
        beta = cho_solve((self.LA, True), self.Vd @ self.r)
        self.alpha = self.r / self.D - (self.V.T @ beta) / self.D

    def log_marginal(self) -> float:
        n = self.y.shape[0]
        logdet = 2.0 * np.sum(np.log(np.diag(self.LA))) + np.sum(np.log(self.D))
        return float(-0.5 * self.r @ self.alpha - 0.5 * logdet - 0.5 * n * LOG_2PI)

    def gradient(self):
        """Gradient w.r.t. (log l, log s, log noise, mean, pseudo-inputs)."""
        kern, Xu, X = self.kernel, self.Xu, self.X
        s, ell2 = kern.signal_variance, kern.lengthscale**2
        alpha, D = self.alpha, self.D
        W = solve_triangular(self.LA, self.Vd, lower=True, check_finite=False)
        # diagonal of 0.5 * (alpha alpha^T - Q^{-1})
        g = 0.5 * (alpha**2 - (1.0 / D - np.einsum("mn,mn->n", W, W)))
        B = solve_triangular(self.L.T, self.V, lower=False, check_finite=False)
        BVd = B @ self.Vd.T
        BG = 0.5 * (np.outer(B @ alpha, alpha) - B / D
                    + BVd @ cho_solve((self.LA, True), self.Vd))
        P = BG - B * g
        S_mn = 2.0 * P
        S_mm = -P @ B.T
        S_mm = 0.5 * (S_mm + S_mm.T)

        d2_uf = sq_dist(Xu, X)
        d2_uu = sq_dist(Xu, Xu)
        np.fill_diagonal(d2_uu, 0.0)
        W1 = S_mn * self.Kuf
        W2 = S_mm * self.Kuu
        d_log_ell = (np.sum(W1 * d2_uf) + np.sum(W2 * d2_uu)) / ell2
        d_log_s = np.sum(W1) + np.sum(W2) + self.jitter * np.trace(S_mm) + s * np.sum(g)
        d_log_noise = self.noise * np.sum(g)
        d_mean = np.sum(alpha)
        d_Xu = -(W1.sum(1)[:, None] * Xu - W1 @ X) / ell2
        d_Xu -= 2.0 * (W2.sum(1)[:, None] * Xu - W2 @ Xu) / ell2
        return d_log_ell, d_log_s, d_log_noise, d_mean, d_Xu

    def posterior_pseudo_targets(self) -> np.ndarray:
        # K_MM Q_MM^{-1} (K_MN D^{-1} y + mu) with Q_MM = L A L^T
        rhs = self.Kuf @ (self.y / self.D) + self.mean
        t = solve_triangular(self.L, rhs, lower=True, check_finite=False)
        return self.L @ cho_solve((self.LA, True), t)


def fitc_log_marginal(expert: SparseGPExpert, X, y) -> float:
    """FITC log marginal likelihood of ``y`` given inputs ``X``."""
    X, y = _check_data(X, y, expert.input_dim)
    return _Fitc(expert.mean, expert.kernel, expert.noise_variance,
                 expert.pseudo_inputs, X, y).log_marginal()


def fitc_intermediates(expert: SparseGPExpert, X) -> FitcIntermediates:
    X = np.asarray(X, dtype=float).reshape(-1, expert.input_dim)
    f = _Fitc(expert.mean, expert.kernel, expert.noise_variance,
              expert.pseudo_inputs, X, np.zeros(X.shape[0]))
    Q_MM = f.Kuu + f.Kuf @ (f.Kuf / f.D).T
    return FitcIntermediates(K_MM=f.Kuu, K_MN=f.Kuf, Lambda=f.Lam, Q_MM=Q_MM)


def exact_gp_log_marginal(mean, kernel: KernelParams, noise_variance, X, y) -> float:
    """Dense GP log marginal likelihood via Cholesky of K + noise * I."""
    X, y = _check_data(X, y)
    K = kernel_matrix(kernel, X, X) + noise_variance * np.eye(X.shape[0])
    L, _ = stable_cholesky(K, kernel.signal_variance + noise_variance, always_jitter=False)
    r = y - mean
    a = solve_triangular(L, r, lower=True)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(L)))
                 - 0.5 * X.shape[0] * LOG_2PI)


def pseudo_target_posterior_mean(expert: SparseGPExpert, X, y) -> np.ndarray:
    X, y = _check_data(X, y, expert.input_dim)
    return _Fitc(expert.mean, expert.kernel, expert.noise_variance,
                 expert.pseudo_inputs, X, y).posterior_pseudo_targets()


def predict_expert_batch(expert: SparseGPExpert, Xs) -> tuple[np.ndarray, np.ndarray]:
    """Predictive means and variances (noise included) at the rows of ``Xs``."""
    Xs = np.asarray(Xs, dtype=float)
    if Xs.ndim == 1:
        Xs = Xs.reshape(-1, expert.input_dim) if expert.input_dim > 1 else Xs[:, None]
    if Xs.shape[1] != expert.input_dim:
        raise InvalidArgumentError(
            f"expected {expert.input_dim} input columns, got {Xs.shape[1]}")
    Ks = kernel_matrix(expert.kernel, expert.pseudo_inputs, Xs)
    mean = expert.mean + Ks.T @ expert._weights
    a = solve_triangular(expert._chol, Ks, lower=True, check_finite=False)
    lam = np.maximum(expert.kernel.signal_variance - np.einsum("mn,mn->n", a, a), 0.0)
    return mean, lam + expert.noise_variance


def predict_expert(expert: SparseGPExpert, x_star) -> tuple[float, float]:
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x_star.shape != (expert.input_dim,):
        raise InvalidArgumentError(
            f"expected a {expert.input_dim}-vector, got shape {x_star.shape}")
    m, v = predict_expert_batch(expert, x_star[None, :])
    return float(m[0]), float(v[0])


# -- fitting -----------------------------------------------------------------

def _pack(log_ell, log_s, log_noise, mean, Xu):
    return np.concatenate([[log_ell, log_s, log_noise, mean], Xu.ravel()])


def _unpack(theta, d):
    Xu = theta[4:].reshape(-1, d)
    return theta[0], theta[1], theta[2], theta[3], Xu


def fitc_objective(theta, X, y, with_grad=True):
    """FITC log marginal at a packed parameter vector, optionally with gradient.

    ``theta = [log l, log s, log noise, mean, pseudo-inputs (row-major)]``.
    """
    log_ell, log_s, log_noise, mean, Xu = _unpack(theta, X.shape[1])
    f = _Fitc(mean, KernelParams(log_ell, log_s), float(np.exp(log_noise)), Xu, X, y)
    val = f.log_marginal()
    if not with_grad:
        return val
    return val, _pack(*f.gradient())


def fitc_objective_fd(theta, X, y, step=1e-5):
    """Central finite-difference gradient of :func:`fitc_objective`."""
    grad = np.empty_like(theta)
    for k in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += step
        tm[k] -= step
        grad[k] = (fitc_objective(tp, X, y, False) - fitc_objective(tm, X, y, False)) / (2 * step)
    return fitc_objective(theta, X, y, False), grad


def median_pairwise_distance(X, max_points=1000, seed=0) -> float:
    X = np.asarray(X, dtype=float)
    if X.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(X.shape[0], max_points, replace=False)
        X = X[np.sort(idx)]
    if X.shape[0] < 2:
        return 1.0
    d2 = sq_dist(X, X)[np.triu_indices(X.shape[0], 1)]
    med = float(np.sqrt(np.median(d2)))
    return med if med > 0 else 1.0


def _box(X):
    lo, hi = X.min(0), X.max(0)
    pad = 0.1 * np.maximum(hi - lo, 1e-12)
    return lo - pad, hi + pad


def _initial_inducing(X, M, seed):
    if M >= X.shape[0]:
        return X.copy()
    from .clustering import ClusterConfig, kmeans
    _, centers, _ = kmeans(X, M, ClusterConfig(restarts=1, max_iters=50, seed=seed))
    return centers


def _degenerate_expert(X, y, global_var):
    var = float(np.var(y)) if y.size > 1 else 0.0
    kern = KernelParams.from_natural(median_pairwise_distance(X),
                                     max(var, global_var, 1e-8))
    noise = max(global_var * 1e-2, 1e-8)
    expert = SparseGPExpert(float(np.mean(y)), kern, float(np.log(noise)),
                            X.copy(), np.zeros(X.shape[0]))
    return SparseGPExpert(expert.mean, kern, expert.log_noise_variance, X.copy(),
                          pseudo_target_posterior_mean(expert, X, y))


def fit_expert(X, y, num_inducing=None, cfg: ExpertFitConfig = ExpertFitConfig(),
               seed=0, global_var=None) -> SparseGPExpert:
    """Fit one FITC expert to ``(X, y)``.

    ``global_var`` is the variance of the full training output, used for the
    noise floor of clusters too small to optimize (fewer than 4 points). The
    returned expert carries the accepted objective values in
    ``objective_trace``.
    """
    X, y = _check_data(X, y)
    n, d = X.shape
    if global_var is None:
        global_var = float(np.var(y)) if n > 1 else 1.0
    if n < MIN_OPTIMIZED_SIZE:
        return _degenerate_expert(X, y, global_var)
    M = inducing_count(n) if num_inducing is None else int(num_inducing)
    if not 1 <= M <= n:
        raise InvalidArgumentError(f"num_inducing must lie in [1, {n}], got {M}")

    var0 = max(float(np.var(y)), 1e-6)
    theta = _pack(np.log(median_pairwise_distance(X, seed=seed)), np.log(var0),
                  np.log(0.1 * var0), float(np.mean(y)), _initial_inducing(X, M, seed))
    lo, hi = _box(X)
    lo_t = np.concatenate([np.full(4, -np.inf), np.tile(lo, M)])
    hi_t = np.concatenate([np.full(4, np.inf), np.tile(hi, M)])
    free = np.ones_like(theta, dtype=bool)
    if not cfg.optimize_inducing:
        free[4:] = False

    objective = fitc_objective_fd if cfg.gradient == "fd" else fitc_objective
    try:
        val, grad = objective(theta, X, y)
    except NumericalError as exc:
        raise NumericalError(f"FITC objective failed at initialization: {exc}", theta)
    if not np.isfinite(val):
        raise NumericalError("non-finite FITC objective at initialization", theta)

    opt = Adam([theta.shape], lr=cfg.learning_rate)
    trace = [val]
    failures = 0
    for _ in range(cfg.max_evals):
        grad = np.where(free, grad, 0.0)
        if np.linalg.norm(grad) <= cfg.tol:
            break
        step = opt.update([-grad])[0] if failures == 0 else opt.steps()[0]
        trial = np.clip(theta - step, lo_t, hi_t)
        try:
            new_val, new_grad = objective(trial, X, y)
        except NumericalError:
            new_val = -np.inf
        if np.isfinite(new_val) and new_val >= val:
            theta, val, grad = trial, new_val, new_grad
            trace.append(val)
            failures = 0
            continue
        # rejected: retry from the same moments with a shorter step
        failures += 1
        opt.lr *= 0.5
        if opt.lr < 1e-10:
            break
        if failures > 60:
            raise NumericalError("FITC optimization diverged", theta)

    log_ell, log_s, log_noise, mean, Xu = _unpack(theta, d)
    kern = KernelParams(float(log_ell), float(log_s))
    fu = _Fitc(float(mean), kern, float(np.exp(log_noise)), Xu, X, y).posterior_pseudo_targets()
    return SparseGPExpert(float(mean), kern, float(log_noise), Xu.copy(), fu,
                          objective_trace=tuple(trace))
