"""Permutation-stable canonical labelling of sparse attributed graphs.

Colour refinement, seeded by (node type, degree) and refined by the
multiset of (edge type, neighbour colour), followed by an individualisation
search over tied colour classes. The canonical form is the lexicographically
smallest serialisation among all search leaves. Automorphisms discovered at
leaves prune sibling branches that lie in the same orbit.
"""

from __future__ import annotations

from typing import Sequence

from .graph import Permutation, SparseGraph, permute_sparse


def _rank(keys: Sequence) -> list[int]:
    order = {k: i for i, k in enumerate(sorted(set(keys)))}
    return [order[k] for k in keys]


def refine(colors: Sequence[int], adj: Sequence[Sequence[tuple[int, int]]]) -> list[int]:
    """Coarsest equitable refinement of ``colors``; colour ids stay ordered."""
    colors = list(colors)
    n_classes = len(set(colors))
    while True:
        sigs = [
            (colors[v], tuple(sorted((t, colors[u]) for u, t in adj[v])))
            for v in range(len(colors))
        ]
        colors = _rank(sigs)
        k = len(set(colors))
        if k == n_classes:
            return colors
        n_classes = k


def _individualize(colors: list[int], v: int) -> list[int]:
    return _rank([2 * c + (0 if u == v else 1) for u, c in enumerate(colors)])


def _serialize(g: SparseGraph, order: Sequence[int]):
    relabel = [0] * len(order)
    for new, old in enumerate(order):
        relabel[old] = new
    nodes = tuple(g.nodes[v] for v in order)
    edges = []
    for s, d, t in g.edges:
        a, b = relabel[s], relabel[d]
        edges.append((a, b, t) if a > b else (b, a, t))
    edges.sort()
    return nodes, tuple(edges)


class _Orbits:
    """Union-find over vertices, fed with automorphism generators."""

    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def canonical_order(g: SparseGraph) -> list[int]:
    """Vertex order (canonical position -> original vertex)."""
    n = g.n_nodes
    if n == 1:
        return [0]
    adj = g.neighbors()
    deg = g.degrees()
    start = refine(_rank([(g.nodes[v], deg[v]) for v in range(n)]), adj)

    best: list = [None, None]  # serialisation, order
    automorphisms: list[list[int]] = []

    def search(colors, prefix):
        cells: dict[int, list[int]] = {}
        for v, c in enumerate(colors):
            cells.setdefault(c, []).append(v)
        target = next((cells[c] for c in sorted(cells) if len(cells[c]) > 1), None)
        if target is None:
            order = sorted(range(n), key=colors.__getitem__)
            ser = _serialize(g, order)
            if best[0] is None or ser < best[0]:
                best[0], best[1] = ser, order
            elif ser == best[0]:
                gamma = [0] * n
                for a, b in zip(best[1], order):
                    gamma[a] = b
                automorphisms.append(gamma)
            return
        explored: list[int] = []
        for v in target:
            if explored:
                # orbits of the pointwise stabiliser of the current prefix
                orbits = _Orbits(n)
                for gamma in automorphisms:
                    if all(gamma[p] == p for p in prefix):
                        for a in range(n):
                            orbits.union(a, gamma[a])
                rv = orbits.find(v)
                if any(orbits.find(w) == rv for w in explored):
                    continue
            explored.append(v)
            search(refine(_individualize(colors, v), adj), prefix + [v])

    search(start, [])
    return best[1]


def canonicalize(g: SparseGraph) -> tuple[SparseGraph, Permutation]:
    """Return the canonical form of ``g`` and the permutation producing it.

    ``permute_sparse(g, perm) == canon`` and the canonical graph is identical
    for every relabelling of ``g``.
    """
    perm = Permutation(tuple(canonical_order(g)))
    return permute_sparse(g, perm), perm


def canonical_key(g: SparseGraph) -> tuple:
    """Hashable isomorphism-class key."""
    c, _ = canonicalize(g)
    return c.nodes, c.edges
