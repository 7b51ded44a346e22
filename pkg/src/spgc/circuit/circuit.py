"""Smooth, decomposable circuits over categorical variables.

Evidence is an integer array with one column per variable; ``MISSING``
(-1) marks a marginalised variable. Everything is computed in natural-log
space in double precision.

Parameters are unconstrained logits. Input categoricals and sum weights are
their softmax, so every parameter vector is a valid distribution by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import log_softmax, logsumexp

from ..exceptions import ConfigurationError, SchemaError, ZeroLikelihoodError, ZeroMassError
from .structure import LEAF, MIX, PRODUCT_SUM, RegionGraphSpec, Structure, build_structure

MISSING = -1


class InputSelection(NamedTuple):
    """Branch decisions of a top-down pass: the input unit feeding each variable.

    ``rep[b]`` is the repetition chosen at the root and ``channel[b, v]`` the
    input unit index of variable ``v`` inside that repetition.
    """

    rep: np.ndarray
    channel: np.ndarray


@dataclass
class Unit:
    """One unit of the explicit (non-tensorised) view of a circuit."""

    kind: str  # "input" | "sum" | "product"
    children: tuple[int, ...] = ()
    log_weights: np.ndarray | None = None
    var: int = -1
    log_probs: np.ndarray | None = None


class _Cache:
    """Forward intermediates needed by backward and top-down sampling."""

    def __init__(self):
        self.values: dict[int, np.ndarray] = {}
        self.free: dict[int, np.ndarray] = {}
        self.extras: dict[int, tuple] = {}
        self.inputs: list[tuple] = []
        self.nbytes = 0

    def track(self, *arrays):
        for a in arrays:
            self.nbytes += a.nbytes


def _masked_log_softmax(logits, valid):
    masked = np.where(valid, logits, -np.inf)
    return log_softmax(masked, axis=-1)


def _categorical(rng, probs):
    """Inverse-CDF draws from the rows of ``probs`` (last axis)."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cdf[..., -1]
    idx = (cdf <= u[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


class Circuit:
    """Tensorised probabilistic circuit built from a region graph.

    Parameters
    ----------
    spec : RegionGraphSpec
    domains : sequence of int
        Number of categories of each variable.
    groups : sequence of str, optional
        Group label of each variable; groups pick up per-group
        hyperparameters from ``spec.groups``.
    random_state : int or Generator, optional
        Seed for the N(0, 0.1) initialisation of the logits.
    """

    def __init__(self, spec: RegionGraphSpec, domains: Sequence[int], groups=None, random_state=0):
        domains = np.asarray(domains, dtype=np.int64)
        if domains.ndim != 1 or len(domains) == 0:
            raise ConfigurationError("vars must be a nonempty sequence of domain sizes")
        if np.any(domains < 1):
            raise ConfigurationError("every domain size must be >= 1")
        self.spec = spec
        self.domains = domains
        self.groups = list(groups) if groups is not None else ["x"] * len(domains)
        self.structure: Structure = build_structure(spec, len(domains), self.groups)
        self._setup_shapes()
        self.init_params(random_state)

    # ------------------------------------------------------------------ setup
    def _setup_shapes(self):
        st = self.structure
        self.group_domain = []
        self.group_valid = []
        self.group_K = []
        for gi, gv in enumerate(st.group_vars):
            d = int(self.domains[gv].max())
            self.group_domain.append(d)
            self.group_valid.append(np.arange(d)[None, :] < self.domains[gv][:, None])
            self.group_K.append(self.spec.group(st.group_names[gi]).n_I)
        self.sum_shapes = []
        for reg in st.regions:
            if reg.kind == PRODUCT_SUM:
                a, b = (st.regions[c] for c in reg.children)
                self.sum_shapes.append((reg.K, a.K * b.K))
            elif reg.kind == MIX:
                self.sum_shapes.append((sum(st.regions[c].K for c in reg.children),))
        self.n_input_params = len(st.group_vars)
        # per variable: (group index, local position)
        self.var_group = np.empty(len(self.domains), dtype=np.intp)
        self.var_local = np.empty(len(self.domains), dtype=np.intp)
        for gi, gv in enumerate(st.group_vars):
            self.var_group[gv] = gi
            self.var_local[gv] = np.arange(len(gv))

    def init_params(self, random_state=0, scale=0.1):
        rng = np.random.default_rng(random_state)
        R = self.spec.n_R
        params = []
        for gi, gv in enumerate(self.structure.group_vars):
            shape = (R, len(gv), self.group_K[gi], self.group_domain[gi])
            params.append(rng.normal(0.0, scale, size=shape))
        for shape in self.sum_shapes:
            params.append(rng.normal(0.0, scale, size=shape))
        self.params = params

    @property
    def n_vars(self) -> int:
        return len(self.domains)

    @property
    def var_count(self) -> int:
        return self.n_vars

    @property
    def root(self) -> int:
        return self.structure.root

    def n_parameters(self) -> int:
        total = 0
        for gi, p in enumerate(self.params[: self.n_input_params]):
            total += int(self.group_valid[gi].sum()) * p.shape[0] * p.shape[2]
        total += sum(p.size for p in self.params[self.n_input_params :])
        return total

    def set_params(self, params):
        if len(params) != len(self.params) or any(
            np.shape(a) != b.shape for a, b in zip(params, self.params)
        ):
            raise ValueError("parameter list does not match the circuit layout")
        self.params = [np.array(p, dtype=np.float64) for p in params]

    def get_params(self):
        return [p.copy() for p in self.params]

    # ------------------------------------------------------- normalised views
    def input_log_probs(self, gi: int) -> np.ndarray:
        return _masked_log_softmax(self.params[gi], self.group_valid[gi][None, :, None, :])

    def sum_log_weights(self, region_id: int) -> np.ndarray:
        reg = self.structure.regions[region_id]
        return log_softmax(self.params[self.n_input_params + reg.param], axis=-1)

    # ------------------------------------------------------------- evidence
    def check_evidence(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_vars:
            raise SchemaError(f"evidence must have {self.n_vars} columns, got shape {X.shape}")
        if np.any(X < MISSING) or np.any(X >= self.domains[None, :]):
            raise SchemaError("observed value outside its variable's domain")
        return X

    # -------------------------------------------------------------- forward
    def _forward(self, X) -> tuple[np.ndarray, _Cache]:
        st = self.structure
        B = X.shape[0]
        cache = _Cache()
        vals = cache.values
        for gi, gv in enumerate(st.group_vars):
            lp = self.input_log_probs(gi)  # (R, V, K, d)
            x = X[:, gv]
            obs = x >= 0
            xc = np.where(obs, x, 0)
            lpT = lp.transpose(1, 3, 0, 2)  # (V, d, R, K)
            gathered = lpT[np.arange(len(gv))[None, :], xc]  # (B, V, R, K)
            gathered = np.where(obs[:, :, None, None], gathered, 0.0)
            cache.track(lp, gathered)
            cache.inputs.append((lp, obs, xc))
            for r in range(self.spec.n_R):
                seg = gathered[:, st.perm[r][gi], r, :]
                leafvals = np.add.reduceat(seg, st.offsets[r][gi], axis=1)
                n_obs = np.add.reduceat(obs[:, st.perm[r][gi]], st.offsets[r][gi], axis=1)
                cache.track(leafvals)
                for li, rid in enumerate(st.leaf_ids[r][gi]):
                    vals[rid] = leafvals[:, li, :]
                    cache.free[rid] = n_obs[:, li] == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            for reg in st.regions:
                if reg.kind == PRODUCT_SUM:
                    L, Rv = vals[reg.children[0]], vals[reg.children[1]]
                    ml = L.max(axis=1, keepdims=True)
                    mr = Rv.max(axis=1, keepdims=True)
                    ml = np.where(np.isfinite(ml), ml, 0.0)
                    mr = np.where(np.isfinite(mr), mr, 0.0)
                    eL = np.exp(L - ml)
                    eR = np.exp(Rv - mr)
                    prod = (eL[:, :, None] * eR[:, None, :]).reshape(B, -1)
                    W = np.exp(self.sum_log_weights(reg.id))
                    S = prod @ W.T
                    free = cache.free[reg.children[0]] & cache.free[reg.children[1]]
                    # a fully marginalised region of a normalised circuit is exactly 1
                    out = np.where(free[:, None], 0.0, np.log(S) + ml + mr)
                    vals[reg.id] = out
                    cache.free[reg.id] = free
                    cache.extras[reg.id] = (eL, eR, prod, W, S)
                    cache.track(eL, eR, prod, S, out)
                elif reg.kind == MIX:
                    C = np.concatenate([vals[c] for c in reg.children], axis=1)
                    lw = self.sum_log_weights(reg.id)
                    joint = lw[None, :] + C
                    free = np.logical_and.reduce([cache.free[c] for c in reg.children])
                    out = np.where(free, 0.0, logsumexp(joint, axis=1))
                    vals[reg.id] = out
                    cache.free[reg.id] = free
                    cache.extras[reg.id] = (C, lw, joint)
                    cache.track(C, joint, out)
        return vals[st.root], cache

    def log_likelihood(self, X) -> np.ndarray:
        """Log value of the circuit for each evidence row."""
        X = self.check_evidence(X)
        ll, _ = self._forward(X)
        return ll

    def activation_bytes(self, X) -> int:
        """Bytes of all intermediates allocated by one forward pass."""
        X = self.check_evidence(X)
        _, cache = self._forward(X)
        return cache.nbytes

    # ------------------------------------------------------------- backward
    def backward(self, X, weights=None):
        """Gradient of ``sum_b weights[b] * log c(X[b])`` w.r.t. every logit.

        Returns ``(log_values, grads)`` with ``grads`` aligned to
        :attr:`params`. Rows with zero likelihood raise
        :class:`ZeroLikelihoodError`.
        """
        X = self.check_evidence(X)
        B = X.shape[0]
        w = np.ones(B) if weights is None else np.asarray(weights, dtype=np.float64)
        ll, cache = self._forward(X)
        if not np.all(np.isfinite(ll)):
            raise ZeroLikelihoodError("gradient undefined: evidence has zero likelihood")
        st = self.structure
        vals = cache.values
        grads = [np.zeros_like(p) for p in self.params]
        up: dict[int, np.ndarray] = {}
        with np.errstate(divide="ignore", invalid="ignore"):
            for reg in reversed(st.regions):
                if reg.kind == MIX:
                    C, lw, joint = cache.extras[reg.id]
                    post = np.exp(joint - ll[:, None])
                    wb = np.where(cache.free[reg.id], 0.0, w)
                    gC = wb[:, None] * post
                    grads[self.n_input_params + reg.param] = gC.sum(0) - wb.sum() * np.exp(lw)
                    start = 0
                    for c in reg.children:
                        k = st.regions[c].K
                        up[c] = up.get(c, 0.0) + gC[:, start : start + k]
                        start += k
                elif reg.kind == PRODUCT_SUM:
                    g = up.pop(reg.id, None)
                    if g is None:
                        continue
                    eL, eR, prod, W, S = cache.extras[reg.id]
                    g = np.where(cache.free[reg.id][:, None], 0.0, g)
                    gamma = np.where(S > 0, g / S, 0.0)
                    A = (gamma @ W).reshape(B, eL.shape[1], eR.shape[1])
                    gL = eL * np.einsum("bij,bj->bi", A, eR)
                    gR = eR * np.einsum("bij,bi->bj", A, eL)
                    gW = gamma.T @ prod
                    tot = np.where(S > 0, g, 0.0).sum(0)
                    grads[self.n_input_params + reg.param] = W * gW - W * tot[:, None]
                    a, b = reg.children
                    up[a] = up.get(a, 0.0) + gL
                    up[b] = up.get(b, 0.0) + gR
        for gi, gv in enumerate(st.group_vars):
            lp, obs, xc = cache.inputs[gi]
            V, K, d = len(gv), self.group_K[gi], self.group_domain[gi]
            sm = np.exp(lp)
            flat = (np.arange(V)[None, :] * d + xc).ravel()
            for r in range(self.spec.n_R):
                leaves = st.leaf_ids[r][gi]
                gl = np.stack([np.broadcast_to(up.get(rid, 0.0), (B, K)) for rid in leaves], axis=1)
                counts = np.diff(np.append(st.offsets[r][gi], V))
                expanded = np.repeat(gl, counts, axis=1)
                G = np.empty_like(expanded)
                G[:, st.perm[r][gi], :] = expanded
                G = G * obs[:, :, None]
                total = G.sum(0)  # (V, K)
                gr = -total[:, :, None] * sm[r]
                for k in range(K):
                    hits = np.bincount(flat, weights=G[:, :, k].ravel(), minlength=V * d)
                    gr[:, k, :] += hits.reshape(V, d)
                grads[gi][r] = np.where(self.group_valid[gi][:, None, :], gr, 0.0)
        return ll, grads

    # ------------------------------------------------------------- sampling
    def sample_topdown(self, X, rng=None, return_selection=False):
        """Complete each evidence row by ancestral sampling.

        Sum units pick a child with probability proportional to weight times
        child value under the evidence; observed variables are kept.
        """
        X = self.check_evidence(X)
        rng = np.random.default_rng(rng)
        ll, cache = self._forward(X)
        if not np.all(np.isfinite(ll)):
            raise ZeroLikelihoodError("cannot sample: evidence has zero likelihood")
        st = self.structure
        B = X.shape[0]
        chan: dict[int, np.ndarray] = {}
        root = st.regions[st.root]
        C, lw, joint = cache.extras[root.id]
        pick = _categorical(rng, np.exp(joint - ll[:, None]))
        start = 0
        rep = np.empty(B, dtype=np.intp)
        for c in root.children:
            k = st.regions[c].K
            hit = (pick >= start) & (pick < start + k)
            chan[c] = np.where(hit, pick - start, -1)
            rep[hit] = st.regions[c].rep
            start += k
        for reg in reversed(st.regions):
            if reg.kind != PRODUCT_SUM or reg.id not in chan:
                continue
            o = chan[reg.id]
            active = o >= 0
            a, b = reg.children
            ca = np.full(B, -1)
            cb = np.full(B, -1)
            if active.any():
                eL, eR, prod, W, S = cache.extras[reg.id]
                idx = np.nonzero(active)[0]
                probs = W[o[idx]] * prod[idx]
                ij = _categorical(rng, probs)
                Kr = eR.shape[1]
                ca[idx] = ij // Kr
                cb[idx] = ij % Kr
            # region graphs are trees: every region has a single parent
            chan[a] = ca
            chan[b] = cb
        channel = np.full((B, self.n_vars), -1, dtype=np.intp)
        out = X.copy()
        for gi, gv in enumerate(st.group_vars):
            lp = cache.inputs[gi][0]
            probs_all = np.exp(lp)
            V = len(gv)
            local = np.full((B, V), -1, dtype=np.intp)
            for r in range(self.spec.n_R):
                leaves = st.leaf_ids[r][gi]
                counts = np.diff(np.append(st.offsets[r][gi], V))
                lc = np.stack([chan.get(rid, np.full(B, -1)) for rid in leaves], axis=1)
                expanded = np.repeat(lc, counts, axis=1)
                unperm = np.empty_like(expanded)
                unperm[:, st.perm[r][gi]] = expanded
                sel = rep == r
                local[sel] = unperm[sel]
            channel[:, gv] = local
            probs = probs_all[rep[:, None], np.arange(V)[None, :], local]  # (B, V, d)
            draws = _categorical(rng, probs)
            x = out[:, gv]
            out[:, gv] = np.where(x >= 0, x, draws)
        if return_selection:
            return out, InputSelection(rep, channel)
        return out

    def input_distribution(self, var: int, rep, channel) -> np.ndarray:
        """Categorical of the input unit ``channel`` of ``var`` in repetition ``rep``.

        ``rep`` and ``channel`` may be arrays; the result has a trailing
        axis of length ``domains[var]``.
        """
        gi = self.var_group[var]
        lp = self.input_log_probs(gi)[:, self.var_local[var]]  # (R, K, d)
        return np.exp(lp[rep, channel, : self.domains[var]])

    def restricted_input_distribution(self, selection: InputSelection, row: int, var: int, allowed) -> np.ndarray:
        """Selected input categorical of ``var`` restricted to ``allowed`` and renormalised."""
        probs = self.input_distribution(var, selection.rep[row], selection.channel[row, var])
        mask = np.zeros(len(probs), dtype=bool)
        mask[np.asarray(list(allowed), dtype=np.intp)] = True
        restricted = np.where(mask, probs, 0.0)
        total = restricted.sum()
        if not total > 0:
            raise ZeroMassError(f"no probability mass on the allowed values of variable {var}")
        return restricted / total

    # -------------------------------------------------------- explicit view
    def to_units(self) -> tuple[list[Unit], int]:
        """Expand into explicit input / product / sum units (small circuits only).

        Returns the topologically ordered unit list and the root unit id.
        """
        st = self.structure
        units: list[Unit] = []
        region_units: dict[int, list[int]] = {}

        def add(u):
            units.append(u)
            return len(units) - 1

        input_ids = {}
        for gi, gv in enumerate(st.group_vars):
            lp = self.input_log_probs(gi)
            for r in range(self.spec.n_R):
                for local, v in enumerate(gv):
                    for k in range(self.group_K[gi]):
                        input_ids[r, int(v), k] = add(
                            Unit("input", var=int(v), log_probs=lp[r, local, k, : self.domains[v]].copy())
                        )
        for reg in st.regions:
            if reg.kind == LEAF:
                ids = []
                for k in range(reg.K):
                    leaves = [input_ids[reg.rep, v, k] for v in reg.scope]
                    ids.append(leaves[0] if len(leaves) == 1 else add(Unit("product", tuple(leaves))))
                region_units[reg.id] = ids
            elif reg.kind == PRODUCT_SUM:
                left, right = (region_units[c] for c in reg.children)
                prods = [add(Unit("product", (i, j))) for i in left for j in right]
                lw = self.sum_log_weights(reg.id)
                region_units[reg.id] = [add(Unit("sum", tuple(prods), log_weights=lw[o].copy())) for o in range(reg.K)]
            else:
                children = [u for c in reg.children for u in region_units[c]]
                region_units[reg.id] = [add(Unit("sum", tuple(children), log_weights=self.sum_log_weights(reg.id).copy()))]
        return units, region_units[st.root][0]

    # --------------------------------------------------------- persistence
    def save(self, path, extra: dict | None = None):
        from .serialize import save_circuit

        save_circuit(path, self, extra)

    @classmethod
    def load(cls, path):
        from .serialize import load_circuit

        return load_circuit(path)[0]


def build(spec: RegionGraphSpec, vars: Sequence[int], groups=None, random_state=0) -> Circuit:
    """Build a circuit over variables with the given domain sizes."""
    if len(vars) == 0:
        raise ConfigurationError("vars must be nonempty")
    return Circuit(spec, vars, groups=groups, random_state=random_state)


def evaluate(circuit: Circuit, evidence) -> np.ndarray | float:
    """Log value of ``circuit`` under ``evidence`` (one row or a batch)."""
    ev = np.asarray(evidence)
    ll = circuit.log_likelihood(ev)
    return float(ll[0]) if ev.ndim == 1 else ll


def backward(circuit: Circuit, evidence):
    """Per-parameter gradients of the log value for a single evidence row."""
    _, grads = circuit.backward(np.asarray(evidence)[None, :] if np.ndim(evidence) == 1 else evidence)
    return grads


def sample_topdown(circuit: Circuit, evidence, rng=None):
    ev = np.asarray(evidence)
    out = circuit.sample_topdown(ev, rng)
    return out[0] if ev.ndim == 1 else out
