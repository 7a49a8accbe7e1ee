"""Mixtures of sparse GP experts with a deep ReLU gating network."""
