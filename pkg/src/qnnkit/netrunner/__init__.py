"""Network definition, model files, end-to-end inference and the benchmark CLI."""

from .cifar10 import build_cifar10, cifar10_network, random_input
from .modelio import dump_model, load_model, parse_model, save_model
from .network import (LayerDef, LayerParams, Model, NetworkDef, count_params_macs,
                      layer_macs)
from .runner import InferenceResult, run_inference

__all__ = [
    "InferenceResult", "LayerDef", "LayerParams", "Model", "NetworkDef", "build_cifar10",
    "cifar10_network", "count_params_macs", "dump_model", "layer_macs", "load_model",
    "parse_model", "random_input", "run_inference", "save_model",
]
