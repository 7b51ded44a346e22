"""Unconditional and substructure-conditioned sampling of simple graphs.

One top-down pass through the circuit fixes every sum-unit branch and hence
the input unit behind each slot. Edge endpoints are then drawn from their
selected input categoricals truncated to the sampled node count. An edge
whose pair is a self-loop or repeats an earlier unordered pair is redrawn
from the same truncated categoricals (rejection, i.e. conditioning on the
non-colliding pairs) up to ``max_retries`` times, after which a uniform
draw over the remaining free pairs is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit.circuit import _categorical
from .exceptions import SchemaError, UnsatisfiableError, ZeroLikelihoodError
from .graph import SparseGraph
from .model import SpgcModel


@dataclass
class CollisionPolicy:
    max_retries: int = 100
    retries: int = 0
    fallbacks: int = 0
    edges: int = 0

    def __post_init__(self):
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")

    @property
    def fallback_rate(self) -> float:
        return self.fallbacks / self.edges if self.edges else 0.0

    def reset(self):
        self.retries = self.fallbacks = self.edges = 0


def _free_pairs(n, used):
    return [(a, b) for a in range(n) for b in range(a) if (a, b) not in used]


def _draw_pair(rng, ps, pd, n, used, policy):
    """Redraw a colliding edge: up to ``max_retries`` fresh draws, then a uniform free pair.

    ``ps`` and ``pd`` are the endpoint categoricals truncated to ``[0, n)``.
    """
    policy.edges += 1
    cs, cd = np.cumsum(ps), np.cumsum(pd)
    if cs[-1] > 0 and cd[-1] > 0:
        us = rng.random(policy.max_retries) * cs[-1]
        ud = rng.random(policy.max_retries) * cd[-1]
        src = np.minimum(np.searchsorted(cs, us, side="right"), n - 1)
        dst = np.minimum(np.searchsorted(cd, ud, side="right"), n - 1)
        for t, (a, b) in enumerate(zip(src.tolist(), dst.tolist())):
            if a == b:
                continue
            pair = (a, b) if a > b else (b, a)
            if pair not in used:
                policy.retries += t + 1
                return pair
        policy.retries += policy.max_retries
    free = _free_pairs(n, used)
    if not free:
        raise UnsatisfiableError(f"no free node pair left among {n} nodes")
    policy.fallbacks += 1
    return free[int(rng.integers(len(free)))]


def _sample(model: SpgcModel, evidence: SparseGraph | None, n_samples: int, policy, rng):
    rng = np.random.default_rng(rng)
    policy = policy if policy is not None else CollisionPolicy()
    layout, circuit = model.layout, model.circuit
    schema = layout.schema
    if evidence is None:
        k = l = 0
        row = np.full(layout.D, -1, dtype=np.int64)
        used0: set = set()
    else:
        schema.check(evidence)
        k, l = evidence.n_nodes, evidence.n_edges
        row = layout.encode(evidence)
        used0 = {(s, d) for s, d, _ in evidence.edges}
        if not np.isfinite(model.marginal(evidence)):
            raise ZeroLikelihoodError("evidence has zero probability under the model")
    sizes = model.cardinality.sample(rng, n_samples, k, l)
    bad = sizes[:, 1] > sizes[:, 0] * (sizes[:, 0] - 1) // 2
    if bad.any():
        n, m = sizes[np.argmax(bad)]
        raise UnsatisfiableError(f"sampled size n={n}, m={m} admits no simple graph")
    X = np.tile(row, (n_samples, 1))
    full, sel = circuit.sample_topdown(X, rng, return_selection=True)

    nm = schema.n_max
    m_hi = int(sizes[:, 1].max()) if n_samples else 0
    # truncated endpoint categoricals for every sample and edge slot
    src_p = np.zeros((n_samples, max(m_hi, 1), nm))
    dst_p = np.zeros_like(src_p)
    for j in range(l, m_hi):
        for var, out in ((layout.src_slot(j), src_p), (layout.dst_slot(j), dst_p)):
            out[:, j] = circuit.input_distribution(var, sel.rep, sel.channel[:, var])
    keep = np.arange(nm)[None, :] < sizes[:, :1]
    src_p *= keep[:, None, :]
    dst_p *= keep[:, None, :]
    first_src = _categorical(rng, np.where(src_p.sum(-1, keepdims=True) > 0, src_p, 1.0))
    first_dst = _categorical(rng, np.where(dst_p.sum(-1, keepdims=True) > 0, dst_p, 1.0))

    graphs = []
    for b in range(n_samples):
        n, m = int(sizes[b, 0]), int(sizes[b, 1])
        nodes = tuple(int(t) for t in full[b, :n])
        edges = list(evidence.edges) if evidence is not None else []
        used = set(used0)
        for j in range(l, m):
            a, d = int(first_src[b, j]), int(first_dst[b, j])
            if a != d and a < n and d < n and ((a, d) if a > d else (d, a)) not in used:
                policy.edges += 1
                pair = (a, d) if a > d else (d, a)
            else:
                pair = _draw_pair(rng, src_p[b, j, :n], dst_p[b, j, :n], n, used, policy)
            used.add(pair)
            edges.append((pair[0], pair[1], int(full[b, layout.etype_slot(j)])))
        graphs.append(SparseGraph(nodes, tuple(edges)))
    return graphs


def sample(model: SpgcModel, policy: CollisionPolicy | None = None, rng=None, n_samples: int = 1):
    """Draw ``n_samples`` simple graphs from the model."""
    return _sample(model, None, n_samples, policy, rng)


def sample_conditional(model: SpgcModel, evidence: SparseGraph | None, policy: CollisionPolicy | None = None, rng=None, n_samples: int = 1):
    """Draw graphs whose leading node and edge slots equal ``evidence``.

    ``evidence=None`` is the empty substructure and reduces to :func:`sample`.
    """
    if evidence is not None and (evidence.n_nodes > model.schema.n_max or evidence.n_edges > model.schema.m_max):
        raise SchemaError("evidence exceeds the schema bounds")
    return _sample(model, evidence, n_samples, policy, rng)
