import json

from ._cmdkit import (
    CmdkitError,
    corr,
    dmd,
    fit_affine,
    load_trajectory,
    save_trajectory,
    weights_mse,
)
from . import _cmdkit


def generate(kind, config):
    """Run a built-in generator; config is a dict. Returns (weights, layers[, labels])."""
    return _cmdkit.generate(kind, json.dumps(config))


def decompose(weights, modes=None, threshold=None, sample=1000, seed=0, threads=1, layers=None):
    """Fit a CMD model and return it as a dict (the model JSON schema)."""
    return json.loads(_cmdkit.decompose(weights, modes, threshold, sample, seed, threads, layers))


def reconstruct(model):
    return _cmdkit.reconstruct(json.dumps(model))


__all__ = [
    "CmdkitError",
    "corr",
    "decompose",
    "dmd",
    "fit_affine",
    "generate",
    "load_trajectory",
    "reconstruct",
    "save_trajectory",
    "weights_mse",
]
