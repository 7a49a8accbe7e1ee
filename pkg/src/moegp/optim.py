"""Adaptive moment estimation (Adam) on lists of numpy arrays."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam state for a fixed list of parameter shapes.

    ``update`` folds a new gradient into the moment estimates and returns the
    descent steps; callers subtract them (or add, for ascent on -grad).
    """

    def __init__(self, shapes, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def update(self, grads):
        self.t += 1
        for m, v, g in zip(self.m, self.v, grads):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
        return self.steps()

    def steps(self):
        """Steps implied by the current moments and learning rate."""
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        return [self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
                for m, v in zip(self.m, self.v)]
