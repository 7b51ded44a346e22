"""Tractable circuit density models over edge-list (sparse) attributed graphs."""

from .circuit import Circuit, RegionGraphSpec
from .estimator import DensePGC, SparsePGC, check_graphs
from .exceptions import (
    ConfigurationError,
    MalformedGraphError,
    NumericalError,
    ParseError,
    SchemaError,
    SpgcError,
    UnsatisfiableError,
    ZeroLikelihoodError,
    ZeroMassError,
)
from .graph import DatasetSchema, DenseGraph, Permutation, SparseGraph
from .model import CardinalityTable, DenseModel, SpgcModel, build_dense_baseline, build_spgc, load_model
from .sampler import CollisionPolicy, sample, sample_conditional
from .train import OptimizerConfig, grad_check, train

__version__ = "0.1.0"

__all__ = [
    "CardinalityTable",
    "Circuit",
    "CollisionPolicy",
    "ConfigurationError",
    "DatasetSchema",
    "DenseGraph",
    "DenseModel",
    "DensePGC",
    "MalformedGraphError",
    "NumericalError",
    "OptimizerConfig",
    "ParseError",
    "Permutation",
    "RegionGraphSpec",
    "SchemaError",
    "SparseGraph",
    "SparsePGC",
    "SpgcError",
    "SpgcModel",
    "UnsatisfiableError",
    "ZeroLikelihoodError",
    "ZeroMassError",
    "build_dense_baseline",
    "build_spgc",
    "check_graphs",
    "grad_check",
    "load_model",
    "sample",
    "sample_conditional",
    "train",
]
