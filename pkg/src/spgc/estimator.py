"""Scikit-learn style estimators wrapping the sparse and dense graph circuits."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_is_fitted

from .circuit import RegionGraphSpec
from .exceptions import MalformedGraphError
from .graph import DatasetSchema, SparseGraph
from .model import build_dense_baseline, build_spgc, load_model
from .sampler import CollisionPolicy, sample, sample_conditional
from .train import OptimizerConfig, train


def check_graphs(X, allow_empty: bool = False) -> list[SparseGraph]:
    """Coerce an iterable of graphs (or their JSON dicts) to ``SparseGraph``."""
    if isinstance(X, (SparseGraph, dict)):
        raise TypeError("expected a sequence of graphs, got a single graph")
    out = []
    for i, g in enumerate(X):
        if isinstance(g, SparseGraph):
            out.append(g)
        elif isinstance(g, dict):
            try:
                out.append(SparseGraph.from_dict(g))
            except (KeyError, TypeError) as exc:
                raise MalformedGraphError(f"record {i}: {exc}") from exc
        else:
            raise TypeError(f"record {i}: expected SparseGraph or dict, got {type(g).__name__}")
    if not out and not allow_empty:
        raise ValueError("no graphs given")
    return out


class _GraphCircuitEstimator(DensityMixin, BaseEstimator):
    _builder = staticmethod(build_spgc)

    def __init__(
        self,
        kind="BT",
        n_L=1,
        n_S=16,
        n_I=16,
        n_R=1,
        n_c=16,
        groups=None,
        learning_rate=0.05,
        beta1=0.9,
        beta2=0.82,
        epochs=40,
        batch_size=256,
        alpha=0.0,
        schema=None,
        random_state=0,
    ):
        self.kind = kind
        self.n_L = n_L
        self.n_S = n_S
        self.n_I = n_I
        self.n_R = n_R
        self.n_c = n_c
        self.groups = groups
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epochs = epochs
        self.batch_size = batch_size
        self.alpha = alpha
        self.schema = schema
        self.random_state = random_state

    def region_spec(self) -> RegionGraphSpec:
        return RegionGraphSpec(
            self.kind, self.n_L, self.n_S, self.n_I, self.n_R, self.n_c, int(self.random_state or 0), dict(self.groups or {})
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            self.learning_rate, self.beta1, self.beta2, 1e-8, self.epochs, self.batch_size, int(self.random_state or 0)
        )

    def fit(self, X, y=None, valid=None):
        graphs = check_graphs(X)
        schema = self.schema
        if schema is None:
            schema = DatasetSchema.from_graphs(graphs)
        elif isinstance(schema, dict):
            schema = DatasetSchema(**schema)
        model = self._builder(schema, self.region_spec(), random_state=self.random_state)
        valid = check_graphs(valid) if valid is not None else None
        self.report_ = train(model, graphs, self.optimizer_config(), valid=valid, alpha=self.alpha)
        self.model_ = model
        self.schema_ = schema
        return self

    def score_samples(self, X) -> np.ndarray:
        """Log-likelihood of each graph (evaluated in canonical order)."""
        check_is_fitted(self, "model_")
        return self.model_.log_prob_batch(check_graphs(X, allow_empty=True))

    def score(self, X, y=None) -> float:
        return float(np.mean(self.score_samples(X)))

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path)

    @classmethod
    def load(cls, path):
        est = cls()
        est.model_ = load_model(path)
        est.schema_ = est.model_.schema
        return est


class SparsePGC(_GraphCircuitEstimator):
    """Sparse graph circuit density estimator over ``SparseGraph`` objects.

    >>> from spgc.graph import SparseGraph
    >>> g = SparseGraph((0, 1), ((1, 0, 0),))
    >>> est = SparsePGC(n_S=2, n_I=2, n_c=2, epochs=2).fit([g] * 8)
    >>> [(s.n_nodes, s.n_edges) for s in est.sample(2, random_state=0)]
    [(2, 1), (2, 1)]
    """

    _builder = staticmethod(build_spgc)

    def marginal(self, evidence: SparseGraph | None, n=None, m=None) -> float:
        """Log-probability of a prefix substructure, summed over all sizes."""
        check_is_fitted(self, "model_")
        return self.model_.marginal(evidence, n, m)

    def sample(self, n_samples=1, random_state=None, policy: CollisionPolicy | None = None) -> list[SparseGraph]:
        check_is_fitted(self, "model_")
        self.policy_ = policy or CollisionPolicy()
        return sample(self.model_, self.policy_, random_state, n_samples)

    def sample_conditional(self, evidence: SparseGraph, n_samples=1, random_state=None, policy=None) -> list[SparseGraph]:
        check_is_fitted(self, "model_")
        self.policy_ = policy or CollisionPolicy()
        return sample_conditional(self.model_, evidence, self.policy_, random_state, n_samples)


class DensePGC(_GraphCircuitEstimator):
    """Dense-adjacency baseline with the same circuit hyperparameters."""

    _builder = staticmethod(build_dense_baseline)

