"""Sparse and dense graph representations and node relabelling.

Nodes carry categorical types, edges carry categorical types. Node indices
are implicit: position ``i`` in :attr:`SparseGraph.nodes` is node ``i``.
Every stored edge is normalised to ``src > dst`` (lower triangle of the
adjacency matrix). All indices are 0-based.

Permutations follow the adjacency convention ``(pA)[i, j] = A[p(i), p(j)]``:
node ``i`` of the permuted graph is node ``p(i)`` of the original one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import MalformedGraphError, SchemaError

Edge = tuple[int, int, int]


@dataclass(frozen=True)
class SparseGraph:
    """Node-type list plus ``(src, dst, etype)`` triples.

    Edges given with ``src < dst`` are flipped on construction; self-loops
    and repeated unordered pairs are rejected.
    """

    nodes: tuple[int, ...]
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        nodes = tuple(int(t) for t in self.nodes)
        if len(nodes) == 0:
            raise MalformedGraphError("a graph needs at least one node")
        if any(t < 0 for t in nodes):
            raise MalformedGraphError("node types must be non-negative")
        n = len(nodes)
        edges = []
        seen = set()
        for e in self.edges:
            if len(e) != 3:
                raise MalformedGraphError(f"edge {e!r} is not a (src, dst, etype) triple")
            s, d, t = (int(v) for v in e)
            if s == d:
                raise MalformedGraphError(f"self-loop on node {s}")
            if s < d:
                s, d = d, s
            if d < 0 or s >= n:
                raise MalformedGraphError(f"edge ({s}, {d}) references a node outside [0, {n})")
            if t < 0:
                raise MalformedGraphError("edge types must be non-negative")
            if (s, d) in seen:
                raise MalformedGraphError(f"duplicate edge between {d} and {s}")
            seen.add((s, d))
            edges.append((s, d, t))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> list[int]:
        deg = [0] * self.n_nodes
        for s, d, _ in self.edges:
            deg[s] += 1
            deg[d] += 1
        return deg

    def neighbors(self) -> list[list[tuple[int, int]]]:
        """Adjacency lists of ``(neighbor, etype)``."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for s, d, t in self.edges:
            adj[s].append((d, t))
            adj[d].append((s, t))
        return adj

    def is_connected(self) -> bool:
        adj = self.neighbors()
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n_nodes

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes), "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, obj: dict) -> "SparseGraph":
        try:
            return cls(tuple(obj["nodes"]), tuple(tuple(e) for e in obj.get("edges", ())))
        except (KeyError, TypeError) as exc:
            raise MalformedGraphError(f"bad graph record: {exc}") from exc


@dataclass(frozen=True, eq=False)
class DenseGraph:
    """Node-type vector ``xs`` and categorical adjacency ``adj``.

    ``adj[i, j] == 0`` means "no edge"; otherwise the edge type is
    ``adj[i, j] - 1``.
    """

    xs: np.ndarray
    adj: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=np.int64).reshape(-1)
        adj = np.array(self.adj, dtype=np.int64)
        n = xs.shape[0]
        if n == 0:
            raise MalformedGraphError("a graph needs at least one node")
        if adj.shape != (n, n):
            raise MalformedGraphError(f"adjacency shape {adj.shape} does not match {n} nodes")
        if not np.array_equal(adj, adj.T):
            raise MalformedGraphError("adjacency matrix is not symmetric")
        if np.any(np.diag(adj) != 0):
            raise MalformedGraphError("adjacency matrix has a nonzero diagonal")
        if np.any(adj < 0) or np.any(xs < 0):
            raise MalformedGraphError("categories must be non-negative")
        xs.flags.writeable = False
        adj.flags.writeable = False
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "adj", adj)

    @property
    def n_nodes(self) -> int:
        return int(self.xs.shape[0])

    def __eq__(self, other):
        if not isinstance(other, DenseGraph):
            return NotImplemented
        return np.array_equal(self.xs, other.xs) and np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash((self.xs.tobytes(), self.adj.tobytes()))


@dataclass(frozen=True)
class Permutation:
    """A bijection on ``[0, n)``; ``mapping[i]`` is the image of ``i``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(i) for i in self.mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise ValueError(f"{mapping!r} is not a bijection on [0, {len(mapping)})")
        object.__setattr__(self, "mapping", mapping)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def from_one_based(cls, values: Sequence[int]) -> "Permutation":
        return cls(tuple(v - 1 for v in values))

    def to_one_based(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in self.mapping)

    def __len__(self):
        return len(self.mapping)

    def __getitem__(self, i):
        return self.mapping[i]

    def __iter__(self) -> Iterator[int]:
        return iter(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return Permutation(tuple(inv))

    def compose(self, other: "Permutation") -> "Permutation":
        """``self ∘ other``: ``i -> self(other(i))``."""
        if len(other) != len(self):
            raise ValueError("cannot compose permutations of different sizes")
        return Permutation(tuple(self.mapping[j] for j in other.mapping))


@dataclass(frozen=True)
class DatasetSchema:
    """Size bounds and category counts shared by every graph of a dataset."""

    n_max: int
    m_max: int
    n_V: int
    n_E: int

    def __post_init__(self):
        if self.n_max < 1 or self.m_max < 0 or self.n_V < 1 or self.n_E < 1:
            raise SchemaError(f"invalid schema {self}")

    @classmethod
    def from_graphs(cls, graphs: Iterable[SparseGraph]) -> "DatasetSchema":
        n_max = m_max = 0
        n_V = n_E = 1
        for g in graphs:
            n_max = max(n_max, g.n_nodes)
            m_max = max(m_max, g.n_edges)
            n_V = max(n_V, max(g.nodes) + 1)
            if g.edges:
                n_E = max(n_E, max(t for _, _, t in g.edges) + 1)
        if n_max == 0:
            raise SchemaError("cannot infer a schema from an empty dataset")
        return cls(n_max, m_max, n_V, n_E)

    def check(self, g: SparseGraph) -> None:
        if g.n_nodes > self.n_max:
            raise SchemaError(f"graph has {g.n_nodes} nodes, schema allows {self.n_max}")
        if g.n_edges > self.m_max:
            raise SchemaError(f"graph has {g.n_edges} edges, schema allows {self.m_max}")
        if max(g.nodes) >= self.n_V:
            raise SchemaError(f"node type {max(g.nodes)} outside [0, {self.n_V})")
        if g.edges and max(t for _, _, t in g.edges) >= self.n_E:
            raise SchemaError(f"edge type outside [0, {self.n_E})")

    def to_dict(self) -> dict:
        return {"n_max": self.n_max, "m_max": self.m_max, "n_V": self.n_V, "n_E": self.n_E}


def to_dense(g: SparseGraph) -> DenseGraph:
    n = g.n_nodes
    adj = np.zeros((n, n), dtype=np.int64)
    for s, d, t in g.edges:
        adj[s, d] = adj[d, s] = t + 1
    return DenseGraph(np.asarray(g.nodes, dtype=np.int64), adj)


def to_sparse(d: DenseGraph) -> SparseGraph:
    """Edges in row-major order of the strict lower triangle."""
    rows, cols = np.nonzero(np.tril(d.adj, k=-1))
    # np.nonzero already walks row-major
    edges = tuple((int(i), int(j), int(d.adj[i, j]) - 1) for i, j in zip(rows, cols))
    return SparseGraph(tuple(int(x) for x in d.xs), edges)


def _check_size(n: int, p: Permutation):
    if len(p) != n:
        raise ValueError(f"permutation of size {len(p)} applied to a graph with {n} nodes")


def permute_dense(d: DenseGraph, p: Permutation) -> DenseGraph:
    _check_size(d.n_nodes, p)
    idx = np.asarray(p.mapping)
    return DenseGraph(d.xs[idx], d.adj[np.ix_(idx, idx)])


def permute_sparse(g: SparseGraph, p: Permutation) -> SparseGraph:
    """Relabel nodes and re-extract the edge list in row-major order.

    Equivalent to ``to_sparse(permute_dense(to_dense(g), p))`` but O(n + m log m).
    """
    _check_size(g.n_nodes, p)
    inv = p.inverse().mapping
    nodes = tuple(g.nodes[j] for j in p.mapping)
    edges = []
    for s, d, t in g.edges:
        a, b = inv[s], inv[d]
        edges.append((a, b, t) if a > b else (b, a, t))
    edges.sort(key=lambda e: (e[0], e[1]))
    return SparseGraph(nodes, tuple(edges))


def induced_edge_permutation(p: Permutation, g: SparseGraph) -> Permutation:
    """Edge reordering caused by relabelling the nodes of ``g`` with ``p``.

    Returns ``q`` such that edge ``k`` of ``permute_sparse(g, p)`` is the
    relabelled edge ``q(k)`` of ``g``.
    """
    _check_size(g.n_nodes, p)
    position = {(s, d): k for k, (s, d, _) in enumerate(g.edges)}
    permuted = permute_sparse(g, p)
    out = []
    for s, d, _ in permuted.edges:
        a, b = p.mapping[s], p.mapping[d]
        out.append(position[(a, b) if a > b else (b, a)])
    return Permutation(tuple(out))


def is_sorted_row_major(g: SparseGraph) -> bool:
    keys = [(s, d) for s, d, _ in g.edges]
    return keys == sorted(keys)


def read_dataset(path, with_header: bool = False):
    """Read a JSON Lines graph file; the optional first line carries the schema.

    Returns ``(schema, graphs)``, or ``(schema, graphs, header)`` when
    ``with_header`` is set; ``header`` holds any extra keys of the first line.
    """
    schema = None
    header: dict = {}
    graphs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedGraphError(f"{path}:{lineno}: {exc}") from exc
            if "schema" in obj:
                if graphs or schema is not None:
                    raise MalformedGraphError(f"{path}:{lineno}: schema header must come first")
                try:
                    schema = DatasetSchema(**obj["schema"])
                except TypeError as exc:
                    raise MalformedGraphError(f"{path}:{lineno}: bad schema header: {exc}") from exc
                header = {k: v for k, v in obj.items() if k != "schema"}
                continue
            try:
                graphs.append(SparseGraph.from_dict(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedGraphError(f"{path}:{lineno}: {exc}") from exc
    if schema is not None:
        for g in graphs:
            schema.check(g)
    return (schema, graphs, header) if with_header else (schema, graphs)


def write_dataset(path, graphs: Sequence[SparseGraph], schema: DatasetSchema | None = None, header: dict | None = None) -> None:
    if schema is None:
        schema = DatasetSchema.from_graphs(graphs)
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": schema.to_dict(), **(header or {})}) + "\n")
        for g in graphs:
            fh.write(json.dumps(g.to_dict(), separators=(",", ":")) + "\n")


def random_graph(schema: DatasetSchema, rng, n: int | None = None, m: int | None = None) -> SparseGraph:
    """Uniformly random simple graph of the given (or a random feasible) size."""
    rng = np.random.default_rng(rng)
    if n is None:
        n = int(rng.integers(1, schema.n_max + 1))
    cap = min(schema.m_max, n * (n - 1) // 2)
    if m is None:
        m = int(rng.integers(0, cap + 1))
    if m > cap:
        raise SchemaError(f"no simple graph with {n} nodes and {m} edges within the schema")
    pairs = [(a, b) for a in range(n) for b in range(a)]
    chosen = sorted(rng.choice(len(pairs), size=m, replace=False).tolist())
    nodes = tuple(int(t) for t in rng.integers(0, schema.n_V, size=n))
    edges = tuple((pairs[k][0], pairs[k][1], int(rng.integers(schema.n_E))) for k in chosen)
    return SparseGraph(nodes, edges)
