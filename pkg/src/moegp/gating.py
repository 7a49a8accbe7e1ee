"""ReLU feedforward gating network with a softmax head over the experts.

Hidden layers are ``ReLU(A x + b)``; the output layer is affine and feeds a
softmax. Inputs are standardized with a per-column shift and scale stored on
the network (set by :func:`train_gating`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError
from .optim import Adam


@dataclass(frozen=True, eq=False)
class GatingNetwork:
    weights: tuple
    biases: tuple
    input_shift: np.ndarray
    input_scale: np.ndarray

    def __post_init__(self):
        for j in range(1, len(self.weights)):
            if self.weights[j].shape[1] != self.weights[j - 1].shape[0]:
                raise InvalidArgumentError(f"layer {j} does not chain onto layer {j - 1}")
        if any(b.shape != (W.shape[0],) for W, b in zip(self.weights, self.biases)):
            raise InvalidArgumentError("bias shapes do not match weights")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_experts(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_shapes(self):
        return [W.shape for W in self.weights]


@dataclass(frozen=True)
class GatingTrainConfig:
    l2_penalty: float = 0.001
    max_epochs: int = 1000
    validation_fraction: float = 0.1
    batch_size: int = 128
    learning_rate: float = 1e-3
    patience: int = 25
    # validation improvement needed to reset the patience counter
    tol: float = 1e-4
    hidden_dims: tuple = (200, 40, 30)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.validation_fraction < 1:
            raise InvalidArgumentError("validation_fraction must lie in [0, 1)")
        if min(self.max_epochs, self.batch_size, self.patience) < 1:
            raise InvalidArgumentError("epoch, batch and patience counts must be positive")


def init_network(input_dim, hidden_dims, num_experts, seed=0) -> GatingNetwork:
    dims = [int(input_dim), *(int(h) for h in hidden_dims), int(num_experts)]
    if min(dims) < 1:
        raise InvalidArgumentError(f"all layer sizes must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    weights = tuple(rng.standard_normal((dims[j + 1], dims[j])) / np.sqrt(dims[j])
                    for j in range(len(dims) - 1))
    biases = tuple(np.zeros(d) for d in dims[1:])
    return GatingNetwork(weights, biases, np.zeros(dims[0]), np.ones(dims[0]))


def _inputs(net, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if X.shape[0] == net.input_dim else X[:, None]
    if X.shape[1] != net.input_dim:
        raise InvalidArgumentError(f"expected {net.input_dim} inputs, got {X.shape[1]}")
    return X


def _forward(net, H):
    """Activations of every layer for standardized inputs ``H`` (rows)."""
    acts = [H]
    last = len(net.weights) - 1
    for j, (W, b) in enumerate(zip(net.weights, net.biases)):
        H = H @ W.T + b
        if j < last:
            H = np.maximum(H, 0.0)
        acts.append(H)
    return acts


def logits_batch(net: GatingNetwork, X) -> np.ndarray:
    X = _inputs(net, X)
    return _forward(net, (X - net.input_shift) / net.input_scale)[-1]


def softmax(Z):
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def log_softmax(Z):
    Z = Z - Z.max(axis=-1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=-1, keepdims=True))


def gate_probs_batch(net: GatingNetwork, X) -> np.ndarray:
    return softmax(logits_batch(net, X))


def log_gate_probs_batch(net: GatingNetwork, X) -> np.ndarray:
    return log_softmax(logits_batch(net, X))


def logits(net: GatingNetwork, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (net.input_dim,):
        raise InvalidArgumentError(f"expected a {net.input_dim}-vector, got {x.shape}")
    return logits_batch(net, x[None, :])[0]


def gate_probs(net: GatingNetwork, x) -> np.ndarray:
    return softmax(logits(net, x))


def _check_labels(z, n, L):
    z = np.asarray(z)
    if z.shape != (n,) or not np.issubdtype(z.dtype, np.integer):
        raise InvalidArgumentError("labels must be an integer vector matching X")
    if z.size and (z.min() < 0 or z.max() >= L):
        raise InvalidArgumentError(f"labels must lie in 0..{L - 1}")
    return z


def cross_entropy(net, H, z):
    """Mean cross-entropy for standardized inputs ``H`` and labels ``z``."""
    ls = log_softmax(_forward(net, H)[-1])
    return float(-np.mean(ls[np.arange(len(z)), z]))


def loss_and_grad(net: GatingNetwork, H, z, l2_penalty):
    """Penalized mean cross-entropy and its gradients w.r.t. weights and biases.

    ``H`` are already-standardized inputs. The penalty is
    ``l2_penalty * sum ||A_j||_F^2`` (biases are not penalized).
    """
    acts = _forward(net, H)
    n = H.shape[0]
    ls = log_softmax(acts[-1])
    loss = -np.mean(ls[np.arange(n), z])
    loss += l2_penalty * sum(np.sum(W * W) for W in net.weights)
    delta = np.exp(ls)
    delta[np.arange(n), z] -= 1.0
    delta /= n
    gW = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for j in range(len(net.weights) - 1, -1, -1):
        gW[j] = delta.T @ acts[j] + 2.0 * l2_penalty * net.weights[j]
        gb[j] = delta.sum(0)
        if j > 0:
            delta = (delta @ net.weights[j]) * (acts[j] > 0)
    return float(loss), gW, gb


def _validation_split(z, fraction, rng):
    n = z.shape[0]
    if fraction <= 0 or n < 2:
        return np.arange(n), np.array([], dtype=int)
    classes, counts = np.unique(z, return_counts=True)
    if np.all(counts >= 2):
        val = []
        for c in classes:
            idx = np.flatnonzero(z == c)
            k = min(int(round(fraction * idx.size)), idx.size - 1)
            val.extend(rng.permutation(idx)[:k])
        val = np.sort(np.array(val, dtype=int))
    else:
        k = min(max(int(round(fraction * n)), 1), n - 1)
        val = np.sort(rng.permutation(n)[:k])
    train = np.setdiff1d(np.arange(n), val)
    return train, val


def train_gating(net: GatingNetwork, X, z, cfg: GatingTrainConfig = GatingTrainConfig(),
                 return_history=False):
    """Train the gate on hard labels ``z`` (0-based) with Adam and early stopping.

    The incoming weights are taken to act on standardized inputs; the returned
    network records the standardization of ``X``. The weights with the best
    validation cross-entropy are returned.
    """
    X = _inputs(net, X)
    n = X.shape[0]
    z = _check_labels(z, n, net.num_experts)
    shift = X.mean(0)
    scale = X.std(0)
    scale = np.where(scale > 0, scale, 1.0)
    H = (X - shift) / scale
    rng = np.random.default_rng(cfg.seed)
    train, val = _validation_split(z, cfg.validation_fraction, rng)

    weights = [W.copy() for W in net.weights]
    biases = [b.copy() for b in net.biases]
    cur = replace(net, weights=tuple(weights), biases=tuple(biases),
                  input_shift=shift, input_scale=scale)
    opt = Adam([W.shape for W in weights] + [b.shape for b in biases], lr=cfg.learning_rate)
    nW = len(weights)

    best_val, best = np.inf, (tuple(W.copy() for W in weights), tuple(b.copy() for b in biases))
    history = []
    stale = 0
    for epoch in range(cfg.max_epochs):
        perm = train[rng.permutation(train.size)]
        for start in range(0, perm.size, cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            _, gW, gb = loss_and_grad(cur, H[batch], z[batch], cfg.l2_penalty)
            steps = opt.update(gW + gb)
            for j in range(nW):
                weights[j] -= steps[j]
                biases[j] -= steps[nW + j]
        if val.size == 0:
            history.append(np.nan)
            continue
        v = cross_entropy(cur, H[val], z[val])
        history.append(v)
        if v < best_val - cfg.tol:
            stale = 0
        else:
            stale += 1
        if v < best_val:
            best_val = v
            best = (tuple(W.copy() for W in weights), tuple(b.copy() for b in biases))
        if stale >= cfg.patience:
            break
    if val.size:
        cur = replace(cur, weights=best[0], biases=best[1])
    else:
        cur = replace(cur, weights=tuple(weights), biases=tuple(biases))
    if return_history:
        return cur, history
    return cur
