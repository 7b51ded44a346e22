"""Region graphs for tensorised circuits over categorical variables.

A region is a set of variables carrying ``K`` units (channels). Leaf
regions hold fully factorised products of per-variable categorical input
units; an internal region multiplies every unit of its left child with
every unit of its right child and mixes the ``K_left * K_right`` products
with ``K`` sum units. The root sums over the units of the full-scope region
of every repetition.

Variables are partitioned into named groups, each with its own tree depth,
sum width and input width. Group sub-trees are joined by balanced binary
product/sum layers of width ``n_S``; the full-scope region has ``n_c`` sum
units.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..exceptions import ConfigurationError

LEAF, PRODUCT_SUM, MIX = "leaf", "product_sum", "mix"


@dataclass(frozen=True)
class GroupSpec:
    n_L: int
    n_S: int
    n_I: int


@dataclass(frozen=True)
class RegionGraphSpec:
    """Structure hyperparameters.

    ``kind`` is ``"BT"`` (binary tree: recursive midpoint halving of the
    variable sequence) or ``"RT"`` (random binary trees: each repetition
    halves a seeded random permutation). ``groups`` overrides
    ``(n_L, n_S, n_I)`` for named variable groups.
    """

    kind: str = "BT"
    n_L: int = 2
    n_S: int = 4
    n_I: int = 4
    n_R: int = 1
    n_c: int = 4
    seed: int = 0
    groups: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("BT", "RT"):
            raise ConfigurationError(f"unknown region graph kind {self.kind!r}")
        for name in ("n_L", "n_S", "n_I", "n_R", "n_c"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        groups = {}
        for key, g in dict(self.groups).items():
            if not isinstance(g, GroupSpec):
                try:
                    g = GroupSpec(**{"n_L": self.n_L, "n_S": self.n_S, "n_I": self.n_I, **g})
                except TypeError as exc:
                    raise ConfigurationError(f"group {key!r}: {exc}") from exc
            if min(g.n_L, g.n_S, g.n_I) < 1:
                raise ConfigurationError(f"group {key!r}: counts must be >= 1")
            groups[key] = g
        object.__setattr__(self, "groups", groups)

    def group(self, name: str) -> GroupSpec:
        return self.groups.get(name, GroupSpec(self.n_L, self.n_S, self.n_I))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = {k: asdict(v) for k, v in self.groups.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegionGraphSpec":
        d = dict(d)
        d["groups"] = dict(d.get("groups") or {})
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(f"bad region graph spec: {exc}") from exc


@dataclass
class Region:
    id: int
    kind: str
    scope: tuple[int, ...]
    K: int
    children: tuple[int, ...] = ()
    rep: int = -1
    group: int = -1
    param: int = -1


@dataclass
class Structure:
    """Topologically ordered regions plus per-(repetition, group) leaf layout.

    ``perm[r][g]`` orders the local variable positions of group ``g`` so that
    the leaves ``leaf_ids[r][g]`` cover contiguous runs starting at
    ``offsets[r][g]``.
    """

    regions: list[Region]
    root: int
    group_names: list[str]
    group_vars: list[np.ndarray]
    perm: list[list[np.ndarray]]
    offsets: list[list[np.ndarray]]
    leaf_ids: list[list[list[int]]]
    finals: list[int]

    def topology(self) -> dict:
        return {
            "regions": [
                [r.kind, list(r.scope), r.K, list(r.children), r.rep, r.group, r.param]
                for r in self.regions
            ],
            "perm": [[p.tolist() for p in per_rep] for per_rep in self.perm],
        }


def build_structure(
    spec: RegionGraphSpec, n_vars: int, groups: Sequence[str] | None = None
) -> Structure:
    if n_vars < 1:
        raise ConfigurationError("a circuit needs at least one variable")
    if groups is None:
        groups = ["x"] * n_vars
    if len(groups) != n_vars:
        raise ConfigurationError("one group label per variable is required")
    names: list[str] = []
    for g in groups:
        if g not in names:
            names.append(g)
    group_vars = [np.array([v for v in range(n_vars) if groups[v] == name]) for name in names]
    for name, gv in zip(names, group_vars):
        n_L = spec.group(name).n_L
        if 2 ** (n_L - 1) > len(gv):
            raise ConfigurationError(
                f"group {name!r}: n_L={n_L} exceeds log2({len(gv)}) + 1 for its variables"
            )

    regions: list[Region] = []
    n_params = [0]

    def add(kind, scope, K, children=(), rep=-1, group=-1):
        param = -1
        if kind != LEAF:
            param = n_params[0]
            n_params[0] += 1
        regions.append(Region(len(regions), kind, tuple(sorted(scope)), K, tuple(children), rep, group, param))
        return len(regions) - 1

    perm_all, offsets_all, leaves_all, finals = [], [], [], []
    for r in range(spec.n_R):
        rng = np.random.default_rng([spec.seed, r])
        perms, offs, leaf_lists, tops = [], [], [], []
        n_groups = len(names)
        for gi, (name, gv) in enumerate(zip(names, group_vars)):
            gs = spec.group(name)
            order = np.arange(len(gv)) if spec.kind == "BT" else rng.permutation(len(gv))
            leaf_ids: list[int] = []
            leaf_starts: list[int] = []
            cursor = [0]
            lone = n_groups == 1

            def split(seq, levels, top):
                if levels == 1:
                    leaf_starts.append(cursor[0])
                    cursor[0] += len(seq)
                    rid = add(LEAF, gv[seq].tolist(), gs.n_I, rep=r, group=gi)
                    leaf_ids.append(rid)
                    return rid
                mid = len(seq) // 2
                a = split(seq[:mid], levels - 1, False)
                b = split(seq[mid:], levels - 1, False)
                K = spec.n_c if (top and lone) else gs.n_S
                return add(PRODUCT_SUM, regions[a].scope + regions[b].scope, K, (a, b), rep=r, group=gi)

            tops.append(split(order, gs.n_L, True))
            perms.append(order)
            offs.append(np.asarray(leaf_starts, dtype=np.intp))
            leaf_lists.append(leaf_ids)

        def join(items, top):
            if len(items) == 1:
                return items[0]
            mid = len(items) // 2
            a = join(items[:mid], False)
            b = join(items[mid:], False)
            K = spec.n_c if top else spec.n_S
            return add(PRODUCT_SUM, regions[a].scope + regions[b].scope, K, (a, b), rep=r)

        finals.append(join(tops, True))
        perm_all.append(perms)
        offsets_all.append(offs)
        leaves_all.append(leaf_lists)

    root = add(MIX, range(n_vars), 1, finals)
    return Structure(regions, root, names, group_vars, perm_all, offsets_all, leaves_all, finals)
