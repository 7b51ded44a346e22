"""Joint model ``p(G) = p(G | N, M) p(N, M)`` over padded graph layouts.

The conditioned part is one circuit shared by every size: unused node and
edge slots are marginalised. Graphs are evaluated in their canonical order,
which makes ``log_prob`` exactly permutation invariant.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .canonical import canonicalize
from .circuit import Circuit, RegionGraphSpec
from .circuit.serialize import load_circuit, save_circuit
from .exceptions import ConfigurationError, SchemaError
from .graph import DatasetSchema, SparseGraph
from .layout import DenseBaselineLayout, VariableLayout


@dataclass
class CardinalityTable:
    """Log-probabilities of graph sizes.

    For the sparse model ``log_probs[n - 1, m]`` is ``log p(N=n, M=m)`` with
    ``n in [1, n_max]`` and ``m in [0, m_max]``. The dense baseline only
    models the node count and stores a vector ``log_probs[n - 1]``.
    """

    log_probs: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim not in (1, 2):
            raise ConfigurationError("cardinality table must be 1-D or 2-D")
        total = logsumexp(lp)
        if not abs(total) < 1e-9:
            raise ConfigurationError(f"cardinality table sums to {np.exp(total)}, not 1")
        self.log_probs = lp

    def log_prob(self, n: int, m: int | None = None) -> float:
        if not 1 <= n <= self.log_probs.shape[0]:
            return -np.inf
        if self.log_probs.ndim == 1:
            return float(self.log_probs[n - 1])
        if not 0 <= m < self.log_probs.shape[1]:
            return -np.inf
        return float(self.log_probs[n - 1, m])

    def tail(self, k: int, l: int) -> np.ndarray:
        """Sub-table of sizes ``n >= k`` and ``m >= l`` (``n >= 1``)."""
        return self.log_probs[max(k, 1) - 1 :, l:]

    def tail_log_mass(self, k: int, l: int) -> float:
        sub = self.tail(k, l)
        return float(logsumexp(sub)) if sub.size else -np.inf

    def support(self) -> list[tuple[int, int]]:
        nz = np.argwhere(np.isfinite(self.log_probs))
        return [(int(i) + 1, int(j)) for i, j in nz] if self.log_probs.ndim == 2 else [(int(i) + 1,) for i, in nz]

    def sample(self, rng, size: int, k: int = 0, l: int = 0) -> np.ndarray:
        """Draw ``size`` pairs ``(n, m)`` with ``n >= k``, ``m >= l`` (renormalised)."""
        sub = self.tail(k, l)
        if sub.size == 0 or not np.isfinite(logsumexp(sub)):
            raise SchemaError("no cardinality mass compatible with the evidence")
        p = np.exp(sub - logsumexp(sub)).ravel()
        flat = rng.choice(p.size, size=size, p=p / p.sum())
        rows, cols = np.unravel_index(flat, sub.shape)
        return np.stack([rows + max(k, 1), cols + l], axis=1)


def fit_cardinality(graphs: Sequence[SparseGraph], schema: DatasetSchema, alpha: float = 0.0, nodes_only: bool = False) -> CardinalityTable:
    """Maximum-likelihood size table, optionally with additive smoothing ``alpha``.

    Smoothing covers the bounding rectangle of the observed sizes, restricted
    to sizes a simple graph can realise (``m <= n (n - 1) / 2``).
    """
    if len(graphs) == 0:
        raise SchemaError("cannot fit a cardinality table on an empty dataset")
    counts = Counter((g.n_nodes, g.n_edges) for g in graphs)
    for n, m in counts:
        if n > schema.n_max or m > schema.m_max:
            raise SchemaError(f"graph size ({n}, {m}) outside the schema bounds")
    table = np.zeros((schema.n_max, schema.m_max + 1))
    for (n, m), c in counts.items():
        table[n - 1, m] += c
    if alpha > 0:
        ns = [n for n, _ in counts]
        ms = [m for _, m in counts]
        for n in range(min(ns), max(ns) + 1):
            for m in range(min(ms), max(ms) + 1):
                if m <= n * (n - 1) // 2:
                    table[n - 1, m] += alpha
    if nodes_only:
        table = table.sum(axis=1)
    with np.errstate(divide="ignore"):
        return CardinalityTable(np.log(table) - np.log(table.sum()))


class _PaddedModel:
    layout: VariableLayout | DenseBaselineLayout
    circuit: Circuit
    cardinality: CardinalityTable

    def canonical(self, graphs):
        return [canonicalize(g)[0] for g in graphs]

    def encode(self, graphs: Sequence[SparseGraph]) -> np.ndarray:
        return self.layout.encode_batch(graphs)

    def _card_terms(self, graphs) -> np.ndarray:
        raise NotImplementedError

    def log_prob_batch(self, graphs: Sequence[SparseGraph], canonical: bool = True) -> np.ndarray:
        """Log-likelihood of each graph; ``canonical=False`` evaluates the given order."""
        graphs = list(graphs)
        if canonical:
            graphs = self.canonical(graphs)
        card = self._card_terms(graphs)
        ll = self.circuit.log_likelihood(self.encode(graphs)) if graphs else np.empty(0)
        return ll + card

    def log_prob(self, g: SparseGraph, canonical: bool = True) -> float:
        return float(self.log_prob_batch([g], canonical)[0])

    def fit_cardinality(self, graphs, alpha=0.0):
        self.cardinality = fit_cardinality(graphs, self.layout.schema, alpha, nodes_only=self.layout.kind == "dense")
        return self.cardinality

    def save(self, path):
        """Checkpoint circuit, size table and ``metadata`` (e.g. the atom vocabulary)."""
        save_circuit(
            path,
            self.circuit,
            extra={"layout": self.layout.kind, "schema": self.layout.schema.to_dict(), "metadata": self.metadata},
            arrays={"cardinality": self.cardinality.log_probs},
        )


class SpgcModel(_PaddedModel):
    """Sparse graph circuit: padded edge-triple layout plus ``p(N, M)``."""

    def __init__(self, layout: VariableLayout, circuit: Circuit, cardinality: CardinalityTable | None = None):
        if circuit.n_vars != layout.D or not np.array_equal(circuit.domains, layout.domains):
            raise ConfigurationError("circuit variables do not match the layout")
        self.layout = layout
        self.circuit = circuit
        if cardinality is None:
            cardinality = _uniform_feasible(layout.schema)
        self.cardinality = cardinality
        self.metadata: dict = {}

    @property
    def schema(self) -> DatasetSchema:
        return self.layout.schema

    def _card_terms(self, graphs):
        return np.array([self.cardinality.log_prob(g.n_nodes, g.n_edges) for g in graphs])

    def marginal(self, evidence: SparseGraph | None, n: int | None = None, m: int | None = None) -> float:
        """Log-probability that the first slots equal ``evidence``, over all sizes.

        The evidence occupies node slots ``[0, k)`` and edge slots ``[0, l)``;
        every other slot is marginalised. Passing ``n`` and ``m`` restricts the
        sum to that single size.
        """
        ev_row, k, l = self._evidence_row(evidence)
        value = float(self.circuit.log_likelihood(ev_row)[0])
        if n is not None or m is not None:
            if n is None or m is None:
                raise ValueError("fix both n and m or neither")
            if n < k or m < l:
                return -np.inf
            return value + self.cardinality.log_prob(n, m)
        # every size (n, m) >= (k, l) yields the same padded circuit value
        return value + self.cardinality.tail_log_mass(k, l)

    def _evidence_row(self, evidence):
        if evidence is None:
            row = np.full(self.layout.D, -1, dtype=np.int64)
            return row, 0, 0
        k, l = evidence.n_nodes, evidence.n_edges
        if k > self.schema.n_max or l > self.schema.m_max:
            raise SchemaError(f"evidence ({k} nodes, {l} edges) outside schema bounds")
        return self.layout.encode(evidence), k, l

    def size_posterior(self, evidence: SparseGraph | None) -> np.ndarray:
        """``log p(N=n, M=m | evidence)`` as a full-size table (``-inf`` outside support)."""
        _, k, l = self._evidence_row(evidence)
        post = np.full_like(self.cardinality.log_probs, -np.inf)
        sub = self.cardinality.tail(k, l)
        post[max(k, 1) - 1 :, l:] = sub - logsumexp(sub)
        return post


class DenseModel(_PaddedModel):
    """Dense baseline: node types plus every lower-triangle adjacency cell, ``p(N)``."""

    def __init__(self, layout: DenseBaselineLayout, circuit: Circuit, cardinality: CardinalityTable | None = None):
        if circuit.n_vars != layout.D or not np.array_equal(circuit.domains, layout.domains):
            raise ConfigurationError("circuit variables do not match the layout")
        self.layout = layout
        self.circuit = circuit
        if cardinality is None:
            cardinality = CardinalityTable(np.full(layout.schema.n_max, -np.log(layout.schema.n_max)))
        self.cardinality = cardinality
        self.metadata: dict = {}

    @property
    def schema(self):
        return self.layout.schema

    def _card_terms(self, graphs):
        return np.array([self.cardinality.log_prob(g.n_nodes) for g in graphs])


def _uniform_feasible(schema: DatasetSchema) -> CardinalityTable:
    table = np.zeros((schema.n_max, schema.m_max + 1))
    for n in range(1, schema.n_max + 1):
        table[n - 1, : min(schema.m_max, n * (n - 1) // 2) + 1] = 1.0
    with np.errstate(divide="ignore"):
        return CardinalityTable(np.log(table / table.sum()))


def build_spgc(schema: DatasetSchema, spec: RegionGraphSpec, random_state=0) -> SpgcModel:
    layout = VariableLayout(schema)
    circuit = Circuit(spec, layout.domains, layout.groups, random_state=random_state)
    return SpgcModel(layout, circuit)


def build_dense_baseline(schema: DatasetSchema, spec: RegionGraphSpec, random_state=0) -> DenseModel:
    """Dense-representation baseline with the same circuit hyperparameters.

    Group overrides written for the sparse groups are reused: ``V_type``
    settings apply to the node group ``X`` and ``E_idx`` settings to the
    adjacency group ``A``.
    """
    layout = DenseBaselineLayout(schema)
    groups = dict(spec.groups)
    mapped = {}
    if "V_type" in groups:
        mapped["X"] = groups["V_type"]
    if "E_idx" in groups:
        mapped["A"] = groups["E_idx"]
    mapped.update({k: v for k, v in groups.items() if k in ("X", "A")})
    dense_spec = RegionGraphSpec(spec.kind, spec.n_L, spec.n_S, spec.n_I, spec.n_R, spec.n_c, spec.seed, mapped)
    circuit = Circuit(dense_spec, layout.domains, layout.groups, random_state=random_state)
    return DenseModel(layout, circuit)


def graph_to_evidence(layout: VariableLayout, g: SparseGraph) -> np.ndarray:
    return layout.encode(g)


def log_prob(model: _PaddedModel, g: SparseGraph) -> float:
    return model.log_prob(g)


def marginal(model: SpgcModel, evidence: SparseGraph | None, n=None, m=None) -> float:
    return model.marginal(evidence, n, m)


def load_model(path) -> _PaddedModel:
    circuit, extra, arrays = load_circuit(path)
    schema = DatasetSchema(**extra["schema"])
    card = CardinalityTable(arrays["cardinality"])
    if extra.get("layout") == "dense":
        model = DenseModel(DenseBaselineLayout(schema), circuit, card)
    else:
        model = SpgcModel(VariableLayout(schema), circuit, card)
    model.metadata = dict(extra.get("metadata", {}))
    return model
