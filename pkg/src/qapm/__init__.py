"""Graph matching as a quadratic assignment problem.

A siamese graph neural network trained on planted instances, spectral
baselines, exact linear assignment, and a study of the loss landscape of
the polynomial embedding model.
"""
from .errors import ConfigError, NumericError, ParameterError, QapmError
from .gnn import GnnConfig, GnnModel, encode, match
from .graphgen import Graph, InstanceConfig, erdos_renyi, make_instance, permute, random_regular
from .harness import ExperimentConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "NumericError", "ParameterError", "QapmError",
    "GnnConfig", "GnnModel", "encode", "match",
    "Graph", "InstanceConfig", "erdos_renyi", "make_instance", "permute", "random_regular",
    "ExperimentConfig", "evaluate", "train",
]
