"""JSON model files.

Layout (``format_version`` 1)::

    {"format": "moegp-model", "format_version": 1, "input_dim": d, "num_experts": L,
     "experts": [{"mean", "log_lengthscale", "log_signal_variance",
                  "log_noise_variance", "pseudo_inputs": [[...]], "pseudo_targets": [...]}],
     "gate": {"input_shift": [...], "input_scale": [...],
              "layers": [{"shape": [rows, cols], "weights": [[...]], "biases": [...]}]}}

Floats are written with Python's shortest round-trip repr, so a load
reproduces every double bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .gating import GatingNetwork
from .kernel import KernelParams
from .moe import MoEModel
from .sparse_gp import SparseGPExpert

FORMAT = "moegp-model"
FORMAT_VERSION = 1


def model_to_dict(model: MoEModel) -> dict:
    experts = [{
        "mean": float(e.mean),
        "log_lengthscale": float(e.kernel.log_lengthscale),
        "log_signal_variance": float(e.kernel.log_signal_variance),
        "log_noise_variance": float(e.log_noise_variance),
        "pseudo_inputs": e.pseudo_inputs.tolist(),
        "pseudo_targets": e.pseudo_targets.tolist(),
    } for e in model.experts]
    g = model.gate
    layers = [{"shape": list(W.shape), "weights": W.tolist(), "biases": b.tolist()}
              for W, b in zip(g.weights, g.biases)]
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "input_dim": model.input_dim,
        "num_experts": model.num_experts,
        "experts": experts,
        "gate": {"input_shift": g.input_shift.tolist(),
                 "input_scale": g.input_scale.tolist(),
                 "layers": layers},
    }


def model_from_dict(doc: dict) -> MoEModel:
    if doc.get("format") != FORMAT or doc.get("format_version") != FORMAT_VERSION:
        raise InvalidArgumentError("not a version-1 moegp model document")
    d = int(doc["input_dim"])
    experts = []
    for e in doc["experts"]:
        kern = KernelParams(float(e["log_lengthscale"]), float(e["log_signal_variance"]))
        Xu = np.array(e["pseudo_inputs"], dtype=float).reshape(-1, d)
        experts.append(SparseGPExpert(float(e["mean"]), kern, float(e["log_noise_variance"]),
                                      Xu, np.array(e["pseudo_targets"], dtype=float)))
    gd = doc["gate"]
    weights, biases = [], []
    for layer in gd["layers"]:
        W = np.array(layer["weights"], dtype=float).reshape(layer["shape"])
        weights.append(W)
        biases.append(np.array(layer["biases"], dtype=float))
    gate = GatingNetwork(tuple(weights), tuple(biases),
                         np.array(gd["input_shift"], dtype=float),
                         np.array(gd["input_scale"], dtype=float))
    model = MoEModel(tuple(experts), gate)
    if model.num_experts != int(doc["num_experts"]) or model.input_dim != d:
        raise InvalidArgumentError("model header disagrees with its contents")
    return model


def dumps(model: MoEModel) -> str:
    return json.dumps(model_to_dict(model), indent=1)


def save_model(model: MoEModel, path):
    Path(path).write_text(dumps(model) + "\n", encoding="utf-8")


def load_model(path) -> MoEModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
