"""Mixture of sparse GP experts with a neural gate: training and prediction.

Training maximizes the augmented log posterior over hard allocations ``z``
and parameters. Three drivers are provided:

* :func:`fit_mm` alternates an exact per-point allocation step with a
  parameter step (gate and experts refitted on the new allocation);
* :func:`fit_ccr` replaces the allocation step by k-means on rescaled
  ``(x, y)`` and runs a single pass;
* :func:`fit_mm2r` runs two MM iterations from a random allocation.

Expert indices and labels are 0-based throughout.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .clustering import ClusterConfig, build_joint_features, elbow_select_L, kmeans
from .errors import InvalidArgumentError
from .gating import (GatingNetwork, GatingTrainConfig, gate_probs_batch, init_network,
                     log_gate_probs_batch, train_gating)
from .sparse_gp import (LOG_2PI, ExpertFitConfig, SparseGPExpert, fit_expert,
                        inducing_count, predict_expert_batch)

log = logging.getLogger(__name__)

ALGORITHMS = ("ccr", "mm", "mm2r")


@dataclass(frozen=True, eq=False)
class MoEModel:
    experts: tuple
    gate: GatingNetwork

    def __post_init__(self):
        object.__setattr__(self, "experts", tuple(self.experts))
        if len(self.experts) != self.gate.num_experts:
            raise InvalidArgumentError(
                f"{len(self.experts)} experts but the gate has {self.gate.num_experts} outputs")
        if any(e.input_dim != self.gate.input_dim for e in self.experts):
            raise InvalidArgumentError("experts and gate disagree on the input dimension")

    @property
    def num_experts(self) -> int:
        return len(self.experts)

    @property
    def input_dim(self) -> int:
        return self.gate.input_dim


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "ccr"
    # None selects L with the elbow rule over L_range
    num_experts: Optional[int] = None
    L_range: tuple = (1, 2, 3, 4, 5, 6)
    max_mm_iters: int = 20
    min_mm_iters: int = 1
    r2_improvement_tol: float = 1e-4
    reallocate_by_gate: bool = True
    random_init: bool = False
    cluster: ClusterConfig = ClusterConfig()
    gating: GatingTrainConfig = GatingTrainConfig()
    expert: ExpertFitConfig = ExpertFitConfig()
    max_inducing: int = 64
    n_jobs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"algorithm must be one of {ALGORITHMS}")
        if self.num_experts is not None and self.num_experts < 1:
            raise InvalidArgumentError("num_experts must be >= 1")
        if self.r2_improvement_tol < 0 or self.max_mm_iters < 1 or self.max_inducing < 1:
            raise InvalidArgumentError("invalid iteration or tolerance settings")


@dataclass
class IterationRecord:
    iteration: int
    log_posterior: float
    train_r2: float
    changed: int
    seconds: float
    # allocation objective at fixed parameters, before and after the z-step
    alloc_before: float = math.nan
    alloc_after: float = math.nan


@dataclass
class TrainTrace:
    algorithm: str
    records: list = field(default_factory=list)
    labels: Optional[np.ndarray] = None
    initial_r2: float = math.nan
    seconds: float = 0.0

    def append(self, rec: IterationRecord):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)


# -- scores and objectives -------------------------------------------------------

def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise InvalidArgumentError("y_true and y_pred must be equal, nonzero length")
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        raise InvalidArgumentError("R^2 is undefined for a constant y_true")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / ss_tot)


def _as_inputs(model, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if model.input_dim == 1 else X[None, :]
    if X.shape[1] != model.input_dim:
        raise InvalidArgumentError(f"expected {model.input_dim} input columns, got {X.shape[1]}")
    return X


def expert_moments(model: MoEModel, X):
    """Per-expert predictive means and variances, each N x L."""
    X = _as_inputs(model, X)
    cols = [predict_expert_batch(e, X) for e in model.experts]
    return np.column_stack([c[0] for c in cols]), np.column_stack([c[1] for c in cols])


def allocation_scores(model: MoEModel, X, y):
    """``log g_l(x_i) + log N(y_i | f_l(x_i), lambda_il + noise_l)`` as an N x L matrix."""
    X = _as_inputs(model, X)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise InvalidArgumentError("X and y lengths differ")
    m, v = expert_moments(model, X)
    loglik = -0.5 * (LOG_2PI + np.log(v) + (y[:, None] - m) ** 2 / v)
    return log_gate_probs_batch(model.gate, X) + loglik


def allocate(model: MoEModel, X, y) -> np.ndarray:
    """Exact per-point argmax allocation; ties go to the smallest index."""
    return np.argmax(allocation_scores(model, X, y), axis=1)


def allocation_objective(model: MoEModel, X, y, z) -> float:
    """Gate plus local likelihood terms of the augmented log posterior."""
    S = allocation_scores(model, X, y)
    z = np.asarray(z)
    return float(np.sum(S[np.arange(S.shape[0]), z]))


def pseudo_target_log_prior(expert: SparseGPExpert) -> float:
    """``log N(pseudo_targets | mean, K_MM)`` (jittered K_MM, as in fitting)."""
    L = expert._chol
    a = solve_triangular(L, expert.pseudo_targets - expert.mean, lower=True)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(L)))
                 - 0.5 * expert.num_inducing * LOG_2PI)


def augmented_log_posterior(model: MoEModel, X, y, z) -> float:
    """Augmented log posterior up to its additive constant."""
    prior = sum(pseudo_target_log_prior(e) for e in model.experts)
    return allocation_objective(model, X, y, z) + prior


# -- prediction -------------------------------------------------------------------

def predict_batch(model: MoEModel, X, mode="soft"):
    """Predictive mean, variance, gate probabilities and argmax-gate expert.

    ``mode="hard"`` uses the expert with the largest gate probability;
    ``mode="soft"`` the gate-weighted mixture (mean and exact second moment).
    """
    X = _as_inputs(model, X)
    m, v = expert_moments(model, X)
    g = gate_probs_batch(model.gate, X)
    idx = np.argmax(g, axis=1)
    rows = np.arange(X.shape[0])
    if mode == "hard":
        return m[rows, idx], v[rows, idx], g, idx
    if mode != "soft":
        raise InvalidArgumentError("mode must be 'hard' or 'soft'")
    mean = np.sum(g * m, axis=1)
    var = np.sum(g * v, axis=1) + np.sum(g * (m - mean[:, None]) ** 2, axis=1)
    return mean, var, g, idx


def _single(model, x_star):
    x = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x.shape != (model.input_dim,):
        raise InvalidArgumentError(f"expected a {model.input_dim}-vector, got {x.shape}")
    return x[None, :]


def predict_hard(model: MoEModel, x_star):
    """``(mean, expert_index, variance)`` from the argmax-gate expert."""
    mean, var, _, idx = predict_batch(model, _single(model, x_star), "hard")
    return float(mean[0]), int(idx[0]), float(var[0])


def predict_soft(model: MoEModel, x_star):
    """``(mean, variance, gates)`` of the gate-weighted mixture."""
    mean, var, g, _ = predict_batch(model, _single(model, x_star), "soft")
    return float(mean[0]), float(var[0]), g[0]


def predictive_density(model: MoEModel, x_star, y_grid):
    """Mixture density ``sum_l g_l(x*) N(y | m_l, v_l)`` on ``y_grid``."""
    y_grid = np.asarray(y_grid, dtype=float).ravel()
    if y_grid.size == 0:
        raise InvalidArgumentError("y_grid is empty")
    x = _single(model, x_star)
    m, v = expert_moments(model, x)
    g = gate_probs_batch(model.gate, x)[0]
    dens = np.exp(-0.5 * (y_grid[:, None] - m[0]) ** 2 / v[0]) / np.sqrt(2 * np.pi * v[0])
    return dens @ g


def train_r2(model, X, y, mode="soft") -> float:
    return r_squared(y, predict_batch(model, X, mode)[0])


# -- parameter step ---------------------------------------------------------------

def repair_empty(z, L, y=None, scores=None):
    """Give each empty cluster one point taken from the largest cluster.

    With ``scores`` (N x L allocation scores) the moved point is the worst fit
    of the largest cluster under its own expert; otherwise the point whose
    output is farthest from that cluster's mean output.
    """
    z = np.array(z, copy=True)
    for l in range(L):
        counts = np.bincount(z, minlength=L)
        if counts[l] > 0:
            continue
        big = int(np.argmax(counts))
        if counts[big] < 2:
            raise InvalidArgumentError("not enough points to populate every expert")
        members = np.flatnonzero(z == big)
        if scores is not None:
            badness = -scores[members, big]
        else:
            badness = np.abs(y[members] - y[members].mean())
        z[members[int(np.argmax(badness))]] = l
    return z


def _expert_seed(cfg, l):
    return cfg.seed * 1009 + 101 + l


def fit_parameters(X, y, z, cfg: TrainConfig, L=None, global_var=None) -> MoEModel:
    """Refit the gate on ``(X, z)`` and one expert per cluster.

    ``L`` defaults to ``cfg.num_experts`` or ``max(z) + 1``. Empty clusters get
    one point from the largest cluster; clusters under four points get the
    degenerate (unoptimized) expert fit.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z)
    if L is None:
        L = cfg.num_experts or int(z.max()) + 1
    if z.size and (z.min() < 0 or z.max() >= L):
        raise InvalidArgumentError(f"labels must lie in 0..{L - 1}")
    if global_var is None:
        global_var = float(np.var(y))
    if np.any(np.bincount(z, minlength=L) == 0):
        z = repair_empty(z, L, y=y)

    gcfg = cfg.gating

    def fit_gate():
        net = init_network(X.shape[1], gcfg.hidden_dims, L, seed=gcfg.seed + cfg.seed)
        return train_gating(net, X, z, gcfg)

    def fit_one(l):
        m = z == l
        M = inducing_count(int(m.sum()), cfg.max_inducing)
        return fit_expert(X[m], y[m], M, cfg.expert, seed=_expert_seed(cfg, l),
                          global_var=global_var)

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            gate_f = pool.submit(fit_gate)
            experts = list(pool.map(fit_one, range(L)))
            gate = gate_f.result()
    else:
        gate = fit_gate()
        experts = [fit_one(l) for l in range(L)]
    return MoEModel(tuple(experts), gate)


# -- drivers -------------------------------------------------------------------------

def _prepare(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise InvalidArgumentError("X and y lengths differ")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite training data")
    return X, y


def choose_num_experts(X, y, cfg: TrainConfig) -> int:
    if cfg.num_experts is not None:
        return cfg.num_experts
    L_range = [L for L in cfg.L_range if L <= X.shape[0]]
    return elbow_select_L(X, y, L_range, cfg.cluster)


def fit_ccr(X, y, cfg: TrainConfig = TrainConfig()):
    """Cluster-classify-regress: one pass, no iteration."""
    X, y = _prepare(X, y)
    t0 = time.perf_counter()
    L = choose_num_experts(X, y, cfg)
    if X.shape[0] < L:
        raise InvalidArgumentError(f"need at least L={L} points")
    z0, _, _ = kmeans(build_joint_features(X, y, cfg.cluster), L, cfg.cluster)
    gcfg = cfg.gating
    gate = train_gating(init_network(X.shape[1], gcfg.hidden_dims, L, seed=gcfg.seed + cfg.seed),
                        X, z0, gcfg)
    z = z0
    if cfg.reallocate_by_gate and L > 1:
        z = np.argmax(log_gate_probs_batch(gate, X), axis=1)
        if np.any(np.bincount(z, minlength=L) == 0):
            z = repair_empty(z, L, y=y)
    global_var = float(np.var(y))
    experts = []
    for l in range(L):
        m = z == l
        experts.append(fit_expert(X[m], y[m], inducing_count(int(m.sum()), cfg.max_inducing),
                                  cfg.expert, seed=_expert_seed(cfg, l), global_var=global_var))
    model = MoEModel(tuple(experts), gate)
    seconds = time.perf_counter() - t0
    trace = TrainTrace("ccr", labels=z, seconds=seconds)
    trace.append(IterationRecord(1, augmented_log_posterior(model, X, y, z),
                                 train_r2(model, X, y), int(np.sum(z != z0)), seconds))
    return model, trace


def fit_mm(X, y, cfg: TrainConfig = TrainConfig(), init_model: Optional[MoEModel] = None,
           init_labels=None, algorithm="mm"):
    """Maximization-maximization from a fitted model and/or an allocation.

    With only ``init_labels`` the first iteration is the parameter fit to
    them. Every other iteration allocates each point to its best expert at
    fixed parameters, then refits all parameters. Stops on a train-R^2 improvement below
    ``cfg.r2_improvement_tol`` (after ``cfg.min_mm_iters``), on an unchanged
    allocation, or after ``cfg.max_mm_iters``; returns the best-R^2 iterate.
    """
    X, y = _prepare(X, y)
    t0 = time.perf_counter()
    if init_model is None and init_labels is None:
        raise InvalidArgumentError("fit_mm needs an initial model or allocation")
    global_var = float(np.var(y))
    if init_model is None:
        z = np.asarray(init_labels)
        L = cfg.num_experts or int(z.max()) + 1
        model = fit_parameters(X, y, z, cfg, L=L, global_var=global_var)
    else:
        model = init_model
        L = model.num_experts
        z = allocate(model, X, y) if init_labels is None else np.asarray(init_labels)
    trace = TrainTrace(algorithm)
    r2 = train_r2(model, X, y)
    first = 1
    if init_model is None:
        # the fit to the initial allocation is the first parameter step
        trace.append(IterationRecord(1, augmented_log_posterior(model, X, y, z), r2,
                                     0, time.perf_counter() - t0))
        first = 2
    trace.initial_r2 = r2
    best = (model, z, r2)

    for it in range(first, cfg.max_mm_iters + 1):
        t_it = time.perf_counter()
        scores = allocation_scores(model, X, y)
        rows = np.arange(X.shape[0])
        before = float(np.sum(scores[rows, z]))
        z_new = np.argmax(scores, axis=1)
        after = float(np.sum(scores[rows, z_new]))
        changed = int(np.sum(z_new != z))
        if changed == 0:
            trace.append(IterationRecord(it, augmented_log_posterior(model, X, y, z), r2, 0,
                                         time.perf_counter() - t_it, before, after))
            break
        if np.any(np.bincount(z_new, minlength=L) == 0):
            z_new = repair_empty(z_new, L, scores=scores)
        model = fit_parameters(X, y, z_new, cfg, L=L, global_var=global_var)
        z = z_new
        new_r2 = train_r2(model, X, y)
        trace.append(IterationRecord(it, augmented_log_posterior(model, X, y, z), new_r2,
                                     changed, time.perf_counter() - t_it, before, after))
        log.info("%s iteration %d: train R2 %.6f, %d moved", algorithm, it, new_r2, changed)
        if new_r2 > best[2]:
            best = (model, z, new_r2)
        improvement = new_r2 - r2
        r2 = new_r2
        if it >= cfg.min_mm_iters and improvement < cfg.r2_improvement_tol:
            break
    trace.labels = best[1]
    trace.seconds = time.perf_counter() - t0
    return best[0], trace


def random_allocation(n, L, seed):
    return np.random.default_rng([seed, 2]).integers(L, size=n)


def fit_mm2r(X, y, cfg: TrainConfig = TrainConfig()):
    """Two MM iterations from a uniformly random allocation."""
    X, y = _prepare(X, y)
    t0 = time.perf_counter()
    L = choose_num_experts(X, y, cfg)
    z0 = random_allocation(X.shape[0], L, cfg.seed)
    capped = replace(cfg, max_mm_iters=2, num_experts=L)
    model, trace = fit_mm(X, y, capped, init_labels=z0, algorithm="mm2r")
    trace.seconds = time.perf_counter() - t0
    return model, trace


def train(X, y, cfg: TrainConfig = TrainConfig()):
    """Run ``cfg.algorithm``; ``mm`` starts from the CCR solution unless
    ``cfg.random_init`` is set."""
    if cfg.algorithm == "ccr":
        return fit_ccr(X, y, cfg)
    if cfg.algorithm == "mm2r":
        return fit_mm2r(X, y, cfg)
    t0 = time.perf_counter()
    if cfg.random_init:
        X2, y2 = _prepare(X, y)
        L = choose_num_experts(X2, y2, cfg)
        z0 = random_allocation(X2.shape[0], L, cfg.seed)
        model, trace = fit_mm(X2, y2, replace(cfg, num_experts=L), init_labels=z0)
    else:
        ccr_model, ccr_trace = fit_ccr(X, y, cfg)
        model, trace = fit_mm(X, y, cfg, init_model=ccr_model, init_labels=ccr_trace.labels)
    trace.seconds = time.perf_counter() - t0
    return model, trace
