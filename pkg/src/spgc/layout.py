"""Flattened variable layouts for the sparse and dense graph circuits.

Sparse layout (``D = n_max + 3 m_max``)::

    [type_0, ..., type_{n_max-1}, src_0, dst_0, etype_0, src_1, ...]

Dense layout (``D = n_max + n_max (n_max - 1) / 2``)::

    [type_0, ..., type_{n_max-1}, a_10, a_20, a_21, a_30, ...]

with one adjacency cell per strict-lower-triangle pair in row-major order
and category 0 meaning "no edge". Slots beyond the graph's size are
marginalised (``-1``).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .circuit import MISSING
from .exceptions import SchemaError
from .graph import DatasetSchema, SparseGraph


class VariableLayout:
    kind = "sparse"

    def __init__(self, schema: DatasetSchema):
        self.schema = schema
        n_max, m_max = schema.n_max, schema.m_max
        self.D = n_max + 3 * m_max
        self.domains = np.array(
            [schema.n_V] * n_max + [n_max, n_max, schema.n_E] * m_max, dtype=np.int64
        )
        self.groups = ["V_type"] * n_max + ["E_idx", "E_idx", "E_type"] * m_max

    def node_slot(self, i: int) -> int:
        return i

    def src_slot(self, j: int) -> int:
        return self.schema.n_max + 3 * j

    def dst_slot(self, j: int) -> int:
        return self.schema.n_max + 3 * j + 1

    def etype_slot(self, j: int) -> int:
        return self.schema.n_max + 3 * j + 2

    def encode(self, g: SparseGraph, n_nodes: int | None = None, n_edges: int | None = None) -> np.ndarray:
        """Evidence row observing the first ``n_nodes`` nodes and ``n_edges`` edges."""
        self.schema.check(g)
        k = g.n_nodes if n_nodes is None else n_nodes
        l = g.n_edges if n_edges is None else n_edges
        if not (0 <= k <= g.n_nodes and 0 <= l <= g.n_edges):
            raise SchemaError("observed prefix longer than the graph")
        row = np.full(self.D, MISSING, dtype=np.int64)
        row[:k] = g.nodes[:k]
        for j, (s, d, t) in enumerate(g.edges[:l]):
            base = self.schema.n_max + 3 * j
            row[base : base + 3] = (s, d, t)
        return row

    def encode_batch(self, graphs: Sequence[SparseGraph]) -> np.ndarray:
        return np.stack([self.encode(g) for g in graphs]) if graphs else np.empty((0, self.D), np.int64)

    def decode(self, row: np.ndarray, n: int, m: int) -> SparseGraph:
        nm = self.schema.n_max
        nodes = tuple(int(v) for v in row[:n])
        edges = tuple(tuple(int(v) for v in row[nm + 3 * j : nm + 3 * j + 3]) for j in range(m))
        return SparseGraph(nodes, edges)


class DenseBaselineLayout:
    kind = "dense"

    def __init__(self, schema: DatasetSchema):
        self.schema = schema
        n_max = schema.n_max
        self.pairs = [(i, j) for i in range(n_max) for j in range(i)]
        self.pair_index = {p: k for k, p in enumerate(self.pairs)}
        self.D = n_max + len(self.pairs)
        self.n_A = schema.n_E + 1
        self.domains = np.array([schema.n_V] * n_max + [self.n_A] * len(self.pairs), dtype=np.int64)
        self.groups = ["X"] * n_max + ["A"] * len(self.pairs)

    def encode(self, g: SparseGraph) -> np.ndarray:
        self.schema.check(g)
        n = g.n_nodes
        nm = self.schema.n_max
        row = np.full(self.D, MISSING, dtype=np.int64)
        row[:n] = g.nodes
        # cells among the first n nodes are observed, absent edges as category 0
        n_cells = n * (n - 1) // 2
        row[nm : nm + n_cells] = 0
        for s, d, t in g.edges:
            row[nm + self.pair_index[(s, d)]] = t + 1
        return row

    def encode_batch(self, graphs: Sequence[SparseGraph]) -> np.ndarray:
        return np.stack([self.encode(g) for g in graphs]) if graphs else np.empty((0, self.D), np.int64)

    def decode(self, row: np.ndarray, n: int) -> SparseGraph:
        nm = self.schema.n_max
        edges = []
        for k, (i, j) in enumerate(self.pairs[: n * (n - 1) // 2]):
            a = int(row[nm + k])
            if a > 0:
                edges.append((i, j, a - 1))
        return SparseGraph(tuple(int(v) for v in row[:n]), tuple(edges))
