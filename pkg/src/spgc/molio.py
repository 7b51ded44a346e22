"""Molecular graphs: a SMILES subset, valence validity and sample metrics.

Supported grammar (EBNF)::

    smiles   = chain ;
    chain    = atom , { [ bond ] , ( atom | ring ) | branch } ;
    branch   = "(" , [ bond ] , chain , ")" ;
    ring     = digit | "%" , digit , digit ;
    bond     = "-" | "=" | "#" ;
    atom     = "B" | "C" | "N" | "O" | "F" | "P" | "S" | "Cl" | "Br" | "I" ;

Heavy atoms only; hydrogens stay implicit. Aromatic (lowercase) atoms,
bracket atoms, charges, stereo marks, isotopes and ``.`` fragments are
rejected; aromatic inputs must be kekulised upstream.

Bond categories: 0 = single, 1 = double, 2 = triple.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .canonical import canonicalize
from .exceptions import MalformedGraphError, ParseError
from .graph import SparseGraph

ELEMENTS = ("B", "C", "N", "O", "F", "P", "S", "Cl", "Br", "I")
MAX_VALENCE = {"B": 3, "C": 4, "N": 3, "O": 2, "F": 1, "P": 5, "S": 6, "Cl": 1, "Br": 1, "I": 1}
BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3}
BOND_ORDER = (1, 2, 3)  # edge category -> bond order
BOND_NAMES = ("SINGLE", "DOUBLE", "TRIPLE")


@dataclass(frozen=True)
class AtomVocabulary:
    """Ordered atom symbols; node type ``i`` is ``symbols[i]``."""

    symbols: tuple[str, ...] = ELEMENTS
    valences: dict = field(default_factory=lambda: dict(MAX_VALENCE))

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("atom symbols must be unique")
        for s in self.symbols:
            if self.valences.get(s, 0) < 1:
                raise ValueError(f"no valence for atom {s!r}")

    def index(self, symbol: str) -> int:
        return self.symbols.index(symbol)

    def __len__(self):
        return len(self.symbols)

    @classmethod
    def from_symbols(cls, symbols: Iterable[str]) -> "AtomVocabulary":
        """Vocabulary of the given atoms in the fixed element order."""
        present = set(symbols)
        unknown = present - set(ELEMENTS)
        if unknown:
            raise ValueError(f"unsupported atoms {sorted(unknown)}")
        chosen = tuple(s for s in ELEMENTS if s in present)
        return cls(chosen, {s: MAX_VALENCE[s] for s in chosen})

    def to_dict(self):
        return {"symbols": list(self.symbols), "valences": {s: self.valences[s] for s in self.symbols}}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["symbols"]), dict(d.get("valences", MAX_VALENCE)))


FULL_VOCAB = AtomVocabulary()


class _Parser:
    def __init__(self, text: str, vocab: AtomVocabulary):
        self.text = text
        self.pos = 0
        self.vocab = vocab
        self.nodes: list[int] = []
        self.bonds: dict[tuple[int, int], int] = {}
        self.rings: dict[int, tuple[int, int | None, int]] = {}

    def error(self, message, pos=None):
        raise ParseError(message, self.pos if pos is None else pos, self.text)

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else None

    def parse(self) -> SparseGraph:
        if not self.text:
            self.error("empty SMILES string")
        self.chain(None, None)
        if self.pos < len(self.text):
            c = self.peek()
            self.error("unbalanced parenthesis" if c == ")" else f"unexpected {c!r}")
        if self.rings:
            num, (_, _, at) = min(self.rings.items(), key=lambda kv: kv[1][2])
            self.error(f"dangling ring closure {num}", at)
        edges = tuple((a, b, order - 1) for (a, b), order in self.bonds.items())
        return SparseGraph(tuple(self.nodes), edges)

    def bond(self, a, b, order, pos):
        key = (a, b) if a > b else (b, a)
        if a == b:
            self.error("ring closure onto the same atom", pos)
        if key in self.bonds:
            self.error("ring closure duplicates an existing bond", pos)
        self.bonds[key] = order

    def atom(self):
        start = self.pos
        c = self.peek()
        if c is None:
            self.error("expected atom")
        two = self.text[self.pos : self.pos + 2]
        if two in ("Cl", "Br"):
            symbol = two
        elif c in ELEMENTS:
            symbol = c
        elif c.islower() and c.upper() in ELEMENTS + ("SE", "AS"):
            self.error(f"aromatic atom {c!r} is not supported; kekulize the input")
        elif c == "[":
            self.error("bracket atoms are not supported")
        else:
            self.error(f"expected atom, found {c!r}")
        if symbol not in self.vocab.symbols:
            self.error(f"atom {symbol!r} is not in the vocabulary", start)
        self.pos += len(symbol)
        self.nodes.append(self.vocab.index(symbol))
        return len(self.nodes) - 1

    def ring_number(self):
        c = self.peek()
        if c == "%":
            digits = self.text[self.pos + 1 : self.pos + 3]
            if len(digits) != 2 or not digits.isdigit():
                self.error("'%' must be followed by two digits")
            self.pos += 3
            return int(digits)
        self.pos += 1
        return int(c)

    def chain(self, anchor, bond_order):
        current = self.atom()
        if anchor is not None:
            self.bond(anchor, current, bond_order or 1, self.pos)
        while True:
            c = self.peek()
            if c is None or c == ")":
                return
            pending = None
            bond_pos = self.pos
            if c in BOND_SYMBOLS:
                pending = BOND_SYMBOLS[c]
                self.pos += 1
                c = self.peek()
                if c is None:
                    self.error("bond at end of input")
            if c.isdigit() or c == "%":
                at = self.pos
                num = self.ring_number()
                if num in self.rings:
                    other, order, _ = self.rings.pop(num)
                    if order is not None and pending is not None and order != pending:
                        self.error(f"conflicting bond orders for ring closure {num}", at)
                    self.bond(current, other, pending or order or 1, at)
                else:
                    self.rings[num] = (current, pending, at)
            elif c == "(":
                if pending is not None:
                    self.error("bond before a branch", bond_pos)
                self.pos += 1
                inner = None
                if self.peek() in BOND_SYMBOLS:
                    inner = BOND_SYMBOLS[self.peek()]
                    self.pos += 1
                self.chain(current, inner)
                if self.peek() != ")":
                    self.error("unbalanced parenthesis")
                self.pos += 1
            elif c in "/\\@+.[":
                self.error(f"unsupported token {c!r}")
            else:
                nxt = self.atom()
                self.bond(current, nxt, pending or 1, self.pos)
                current = nxt


def parse_smiles(text: str, vocab: AtomVocabulary = FULL_VOCAB) -> SparseGraph:
    """Heavy-atom graph of a SMILES string from the supported subset."""
    return _Parser(text.strip(), vocab).parse()


def to_smiles(g: SparseGraph, vocab: AtomVocabulary = FULL_VOCAB) -> str:
    """Canonical SMILES: depth-first writing of the canonical form of ``g``."""
    if not g.is_connected():
        raise MalformedGraphError("cannot write a disconnected graph as one SMILES string")
    c, _ = canonicalize(g)
    adj = [sorted(nb) for nb in c.neighbors()]
    n = c.n_nodes
    visited = [False] * n
    children: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    opens: list[list[tuple[int, int]]] = [[] for _ in range(n)]  # (partner, etype)
    closes: list[list[int]] = [[] for _ in range(n)]
    parent = [-1] * n
    seen_edges = set()

    stack = [(0, iter(adj[0]))]
    visited[0] = True
    while stack:
        u, it = stack[-1]
        for v, t in it:
            key = (u, v) if u > v else (v, u)
            if key in seen_edges:
                continue
            seen_edges.add(key)
            if visited[v]:
                opens[v].append((u, t))
                closes[u].append(v)
            else:
                visited[v] = True
                parent[v] = u
                children[u].append((v, t))
                stack.append((v, iter(adj[v])))
            break
        else:
            stack.pop()

    out: list[str] = []
    free_digits = list(range(1, 100))
    ring_digit: dict[tuple[int, int], int] = {}

    def ring_token(d):
        return str(d) if d < 10 else f"%{d:02d}"

    def bond_token(t):
        return ("", "=", "#")[t]

    def write(u):
        out.append(vocab.symbols[c.nodes[u]])
        for v in closes[u]:
            d = ring_digit.pop((v, u))
            out.append(ring_token(d))
            free_digits.append(d)
            free_digits.sort()
        for partner, t in opens[u]:
            d = free_digits.pop(0)
            ring_digit[(u, partner)] = d
            out.append(bond_token(t) + ring_token(d))
        kids = children[u]
        for i, (v, t) in enumerate(kids):
            last = i == len(kids) - 1
            if not last:
                out.append("(")
            out.append(bond_token(t))
            write(v)
            if not last:
                out.append(")")

    import sys

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n + 100))
    try:
        write(0)
    finally:
        sys.setrecursionlimit(limit)
    return "".join(out)


class Validity(str, enum.Enum):
    VALID = "valid"
    VALENCE = "valence_exceeded"
    DISCONNECTED = "disconnected"
    UNKNOWN_ATOM = "unknown_atom"
    UNKNOWN_BOND = "unknown_bond"


def check_validity(g: SparseGraph, vocab: AtomVocabulary = FULL_VOCAB) -> Validity:
    """Valence bound on every atom plus connectivity."""
    if max(g.nodes) >= len(vocab):
        return Validity.UNKNOWN_ATOM
    load = [0] * g.n_nodes
    for s, d, t in g.edges:
        if t >= len(BOND_ORDER):
            return Validity.UNKNOWN_BOND
        load[s] += BOND_ORDER[t]
        load[d] += BOND_ORDER[t]
    for i, typ in enumerate(g.nodes):
        if load[i] > vocab.valences[vocab.symbols[typ]]:
            return Validity.VALENCE
    if not g.is_connected():
        return Validity.DISCONNECTED
    return Validity.VALID


@dataclass
class MetricsReport:
    n_samples: int
    n_valid: int
    n_unique: int
    n_novel: int
    validity: float
    uniqueness: float | None
    novelty: float | None
    failures: dict

    @property
    def uniqueness_defined(self) -> bool:
        return self.uniqueness is not None

    @property
    def novelty_defined(self) -> bool:
        return self.novelty is not None

    def to_json(self) -> str:
        d = asdict(self)
        failures = d.pop("failures")
        d["uniqueness_defined"] = self.uniqueness_defined
        d["novelty_defined"] = self.novelty_defined
        for k, v in failures.items():
            d[f"failed_{k}"] = v
        return json.dumps(d, sort_keys=True)


def canonical_strings(graphs: Iterable[SparseGraph], vocab: AtomVocabulary = FULL_VOCAB) -> set[str]:
    out = set()
    for g in graphs:
        if check_validity(g, vocab) is Validity.VALID:
            out.add(to_smiles(g, vocab))
    return out


def compute_metrics(samples: Sequence[SparseGraph], training_set, vocab: AtomVocabulary = FULL_VOCAB) -> MetricsReport:
    """Validity, uniqueness and novelty of generated graphs.

    ``training_set`` may be graphs or a precomputed set of canonical strings.
    Uniqueness and novelty are ``None`` (undefined) without valid samples.
    """
    failures = {v.value: 0 for v in Validity if v is not Validity.VALID}
    valid = []
    for g in samples:
        status = check_validity(g, vocab)
        if status is Validity.VALID:
            valid.append(to_smiles(g, vocab))
        else:
            failures[status.value] += 1
    if isinstance(training_set, (set, frozenset)):
        known = training_set
    else:
        known = canonical_strings(training_set, vocab)
    unique = set(valid)
    novel = unique - known
    n = len(samples)
    return MetricsReport(
        n_samples=n,
        n_valid=len(valid),
        n_unique=len(unique),
        n_novel=len(novel),
        validity=len(valid) / n if n else 0.0,
        uniqueness=len(unique) / len(valid) if valid else None,
        novelty=len(novel) / len(unique) if unique else None,
        failures=failures,
    )


def read_smiles_file(path) -> list[tuple[int, str]]:
    """``(line number, SMILES)`` pairs; blank lines and ``#`` comments are skipped."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip() if line.lstrip().startswith("#") else line.strip()
            if not line:
                continue
            out.append((lineno, line.split()[0]))
    return out


def remap(g: SparseGraph, src: AtomVocabulary, dst: AtomVocabulary) -> SparseGraph:
    return SparseGraph(tuple(dst.index(src.symbols[t]) for t in g.nodes), g.edges)


def components(g: SparseGraph) -> list[SparseGraph]:
    """Connected components, each relabelled to ``0..k-1`` in node order."""
    comp = [-1] * g.n_nodes
    nbrs = g.neighbors()
    groups = []
    for start in range(g.n_nodes):
        if comp[start] >= 0:
            continue
        comp[start] = len(groups)
        members, stack = [], [start]
        while stack:
            u = stack.pop()
            members.append(u)
            for v, _ in nbrs[u]:
                if comp[v] < 0:
                    comp[v] = comp[start]
                    stack.append(v)
        groups.append(sorted(members))
    out = []
    for members in groups:
        local = {v: i for i, v in enumerate(members)}
        edges = tuple((local[s], local[d], t) for s, d, t in g.edges if s in local)
        out.append(SparseGraph(tuple(g.nodes[v] for v in members), edges))
    return out


def parse_smiles_fragments(text: str, vocab: AtomVocabulary = FULL_VOCAB) -> SparseGraph:
    """Disjoint union of ``.``-separated fragments; the inverse of :func:`to_smiles_fragments`."""
    nodes, edges, offset = [], [], 0
    for part in text.strip().split("."):
        try:
            g = parse_smiles(part, vocab)
        except ParseError as exc:
            pos = None if exc.position is None else exc.position + offset
            raise ParseError(exc.message, pos, text) from exc
        base = len(nodes)
        nodes.extend(g.nodes)
        edges.extend((a + base, b + base, t) for a, b, t in g.edges)
        offset += len(part) + 1
    return SparseGraph(tuple(nodes), tuple(edges))


def to_smiles_fragments(g: SparseGraph, vocab: AtomVocabulary = FULL_VOCAB) -> str:
    """SMILES of every component joined by ``.``; for writing arbitrary samples."""
    return ".".join(sorted(to_smiles(c, vocab) for c in components(g)))


def parse_corpus(path, vocab: AtomVocabulary = FULL_VOCAB, skip_invalid: bool = False, fragments: bool = False):
    """Parse a SMILES file; returns ``(graphs, errors)`` with ``errors`` as text.

    ``fragments=True`` accepts ``.``-separated disconnected records.
    """
    parse = parse_smiles_fragments if fragments else parse_smiles
    graphs, errors = [], []
    for lineno, text in read_smiles_file(path):
        try:
            graphs.append(parse(text, vocab))
        except ParseError as exc:
            if not skip_invalid:
                raise ParseError(f"{path}:{lineno}: {exc.message}", exc.position, text) from exc
            errors.append(f"{path}:{lineno}: {exc}")
    return graphs, errors
