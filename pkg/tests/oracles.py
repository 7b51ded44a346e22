"""Brute-force reference computations used by the tests.

Everything here enumerates explicitly and shares no evaluation code with the
package: circuits are read through their explicit unit view, graphs are
compared by minimising over all node permutations.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp


def iso_key(nodes, edges):
    """Isomorphism-invariant key by minimising over every relabelling."""
    n = len(nodes)
    best = None
    for perm in itertools.permutations(range(n)):
        # perm[new] = old
        inv = {old: new for new, old in enumerate(perm)}
        key = (
            tuple(nodes[perm[i]] for i in range(n)),
            tuple(sorted((max(inv[s], inv[d]), min(inv[s], inv[d]), t) for s, d, t in edges)),
        )
        if best is None or key < best:
            best = key
    return best


def graph_key(g):
    return iso_key(g.nodes, g.edges)


# ------------------------------------------------------------------ circuits
def unit_value(units, root, x):
    """Value of the explicit circuit on one row (``-1`` = marginalised)."""
    vals = {}
    for i, u in enumerate(units):
        if u.kind == "input":
            vals[i] = 1.0 if x[u.var] < 0 else float(np.exp(u.log_probs[x[u.var]]))
        elif u.kind == "product":
            vals[i] = float(np.prod([vals[c] for c in u.children]))
        else:
            vals[i] = float(np.dot(np.exp(u.log_weights), [vals[c] for c in u.children]))
    return vals[root]


def induced_trees(units, root):
    """All induced trees as ``(weight, {var: probs})`` pairs."""

    @lru_cache(maxsize=None)
    def expand(i):
        u = units[i]
        if u.kind == "input":
            return (((1.0, ((u.var, tuple(np.exp(u.log_probs))),)),))
        if u.kind == "sum":
            out = []
            for w, c in zip(np.exp(u.log_weights), u.children):
                out.extend((w * cw, cd) for cw, cd in expand(c))
            return tuple(out)
        out = [(1.0, ())]
        for c in u.children:
            out = [(w * cw, d + cd) for w, d in out for cw, cd in expand(c)]
        return tuple(out)

    return [(w, {v: np.array(p) for v, p in d}) for w, d in expand(root)]


# ------------------------------------------------------------------ models
def slot_domain_total(model):
    """Sum of the joint over every size and every slot assignment of that size."""
    s = model.schema
    lay = model.layout
    terms = []
    for n in range(1, s.n_max + 1):
        for m in range(s.m_max + 1):
            lc = model.cardinality.log_prob(n, m)
            if not np.isfinite(lc):
                continue
            rows = []
            for types in itertools.product(range(s.n_V), repeat=n):
                for es in itertools.product(itertools.product(range(s.n_max), range(s.n_max), range(s.n_E)), repeat=m):
                    row = np.full(lay.D, -1, dtype=np.int64)
                    row[:n] = types
                    for j, e in enumerate(es):
                        row[lay.src_slot(j) : lay.src_slot(j) + 3] = e
                    rows.append(row)
            terms.append(logsumexp(model.circuit.log_likelihood(np.array(rows))) + lc)
    return float(np.exp(logsumexp(terms)))


def simple_graphs(schema):
    """Every simple graph within the schema with edges in row-major order."""
    for n in range(1, schema.n_max + 1):
        pairs = [(a, b) for a in range(n) for b in range(a)]
        for m in range(min(schema.m_max, len(pairs)) + 1):
            for chosen in itertools.combinations(pairs, m):
                for types in itertools.product(range(schema.n_V), repeat=n):
                    for ets in itertools.product(range(schema.n_E), repeat=m):
                        yield n, m, tuple(types), tuple((a, b, t) for (a, b), t in zip(chosen, ets))


def brute_marginal(model, evidence):
    """log sum over all sizes and completions of the slots beyond the evidence prefix."""
    s = model.schema
    lay = model.layout
    k = evidence.n_nodes if evidence is not None else 0
    l = evidence.n_edges if evidence is not None else 0
    base = np.full(lay.D, -1, dtype=np.int64) if evidence is None else lay.encode(evidence)
    terms = []
    for n in range(max(k, 1), s.n_max + 1):
        for m in range(l, s.m_max + 1):
            lc = model.cardinality.log_prob(n, m)
            if not np.isfinite(lc):
                continue
            rows = []
            for types in itertools.product(range(s.n_V), repeat=n - k):
                for es in itertools.product(itertools.product(range(s.n_max), range(s.n_max), range(s.n_E)), repeat=m - l):
                    row = base.copy()
                    row[k:n] = types
                    for j, e in enumerate(es, start=l):
                        row[lay.src_slot(j) : lay.src_slot(j) + 3] = e
                    rows.append(row)
            terms.append(logsumexp(model.circuit.log_likelihood(np.array(rows))) + lc)
    return float(logsumexp(terms))


# ------------------------------------------------------------------ sampler
def _pair_distribution(ps, pd, n, used, max_retries):
    """Law of one edge's unordered pair under first draw, redraws and fallback."""
    pnc = {}
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            pair = (max(a, b), min(a, b))
            if pair in used:
                continue
            pnc[pair] = pnc.get(pair, 0.0) + ps[a] * pd[b]
    free = [(a, b) for a in range(n) for b in range(a) if (a, b) not in used]
    Z = sum(pnc.values())
    fail_all = (1.0 - Z) ** (1 + max_retries)
    out = defaultdict(float)
    boost = 1.0 + ((1.0 - Z) / Z) * (1.0 - (1.0 - Z) ** max_retries) if Z > 0 else 0.0
    for pair, p in pnc.items():
        out[pair] += p * boost
    for pair in free:
        out[pair] += fail_all / len(free)
    return out


def sampler_distribution(model, max_retries=100, evidence=None):
    """Exact distribution over isomorphism classes of the sampler's output."""
    s = model.schema
    lay = model.layout
    units, root = model.circuit.to_units()
    trees = induced_trees(units, root)
    k = l = 0
    used0 = set()
    weights = np.array([w for w, _ in trees])
    if evidence is not None:
        k, l = evidence.n_nodes, evidence.n_edges
        row = lay.encode(evidence)
        for t, (_, q) in enumerate(trees):
            for v in np.nonzero(row >= 0)[0]:
                weights[t] *= q[int(v)][row[v]]
        used0 = {(a, b) for a, b, _ in evidence.edges}
    weights = weights / weights.sum()
    sizes = [
        (n, m, np.exp(model.cardinality.log_prob(n, m)))
        for n in range(max(k, 1), s.n_max + 1)
        for m in range(l, s.m_max + 1)
        if np.isfinite(model.cardinality.log_prob(n, m))
    ]
    size_mass = sum(p for _, _, p in sizes)
    dist = defaultdict(float)
    keys = {}
    for w, (_, q) in zip(weights, trees):
        if w == 0:
            continue
        for n, m, pc in sizes:
            pc = pc / size_mass
            ev_nodes = evidence.nodes if evidence is not None else ()
            for types in itertools.product(range(s.n_V), repeat=n - k):
                pt = np.prod([q[lay.node_slot(i)][t] for i, t in zip(range(k, n), types)]) if types else 1.0
                nodes = tuple(ev_nodes) + types
                states = [(1.0, tuple(evidence.edges) if evidence is not None else (), frozenset(used0))]
                for j in range(l, m):
                    ps = q[lay.src_slot(j)][:n]
                    pd = q[lay.dst_slot(j)][:n]
                    ps, pd = ps / ps.sum(), pd / pd.sum()
                    qt = q[lay.etype_slot(j)]
                    nxt = []
                    for p, edges, used in states:
                        for pair, pp in _pair_distribution(ps, pd, n, used, max_retries).items():
                            for et in range(s.n_E):
                                nxt.append((p * pp * qt[et], edges + ((pair[0], pair[1], et),), used | {pair}))
                    states = nxt
                for p, edges, _ in states:
                    key = keys.get((nodes, edges))
                    if key is None:
                        key = keys[(nodes, edges)] = iso_key(nodes, edges)
                    dist[key] += w * pc * pt * p
    return dict(dist)


def total_variation(p: dict, q: dict) -> float:
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def empirical(graphs) -> dict:
    counts = defaultdict(int)
    for g in graphs:
        counts[graph_key(g)] += 1
    return {k: c / len(graphs) for k, c in counts.items()}
