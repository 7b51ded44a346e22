import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import graph_key
from spgc.exceptions import MalformedGraphError, ParseError
from spgc.graph import Permutation, SparseGraph, permute_sparse
from spgc.molio import (
    FULL_VOCAB,
    AtomVocabulary,
    Validity,
    check_validity,
    compute_metrics,
    parse_corpus,
    parse_smiles,
    parse_smiles_fragments,
    to_smiles,
    to_smiles_fragments,
)

C, N, O = (FULL_VOCAB.index(s) for s in "CNO")


def test_ethanol_fixture():
    g = parse_smiles("CCO")
    assert g.nodes == (C, C, O)
    assert g.edges == ((1, 0, 0), (2, 1, 0))


def test_cyclopropane_fixture():
    g = parse_smiles("C1CC1")
    assert g.nodes == (C, C, C)
    assert sorted(g.edges) == [(1, 0, 0), (2, 0, 0), (2, 1, 0)]


def test_bond_orders_branches_and_two_digit_rings():
    g = parse_smiles("C=CC#N")
    assert [t for _, _, t in g.edges] == [1, 0, 2]
    h = parse_smiles("CC(=O)O")
    assert (2, 1, 1) in h.edges and (3, 1, 0) in h.edges
    r = parse_smiles("C%12CC%12")
    assert r.n_edges == 3
    assert parse_smiles("C1CC=1").edges[-1][2] == 1


@pytest.mark.parametrize(
    "text,fragment,pos",
    [
        ("C(", "expected atom", 2),
        ("C(C", "unbalanced parenthesis", None),
        ("C1CC", "dangling ring closure 1", None),
        ("C=1CC#1", "conflicting bond orders", None),
        ("c1ccccc1", "kekulize", 0),
        ("[NH4+]", "bracket", 0),
        ("CC=", "bond at end of input", None),
        ("C.C", "unsupported", 1),
        ("C/C", "unsupported", 1),
        ("Xx", "expected atom", 0),
        ("", "empty", 0),
    ],
)
def test_parse_errors(text, fragment, pos):
    with pytest.raises(ParseError) as info:
        parse_smiles(text)
    assert fragment in str(info.value)
    if pos is not None:
        assert info.value.position == pos


def test_unknown_atom_for_vocabulary():
    vocab = AtomVocabulary.from_symbols(["C", "O"])
    with pytest.raises(ParseError):
        parse_smiles("CN", vocab)
    assert parse_smiles("CO", vocab).nodes == (0, 1)


@pytest.mark.parametrize(
    "text", ["CCO", "C1CC1", "C=CC#N", "CC(=O)O", "C1CC2CC2C1", "OC1=CC=CC=C1", "FC(F)(F)Cl", "C1CC2CC1CC2"]
)
def test_round_trip_is_isomorphic(text):
    g = parse_smiles(text)
    out = to_smiles(g)
    assert graph_key(parse_smiles(out)) == graph_key(g)
    assert to_smiles(parse_smiles(out)) == out


def test_ladder_with_two_digit_rings_round_trips():
    # eleven rungs between two chains; the input needs ring labels beyond 9
    n = 11
    text = "".join(f"C{i}" if i < 10 else f"C%{i}" for i in range(1, n + 1))
    text += "CCC" + "".join(f"C{i}" if i < 10 else f"C%{i}" for i in reversed(range(1, n + 1)))
    g = parse_smiles(text)
    out = to_smiles(g)
    back = parse_smiles(out)
    # too large for the brute-force key; compare invariants and the fixed point
    assert (back.n_nodes, back.n_edges) == (g.n_nodes, g.n_edges)
    assert sorted(map(len, back.neighbors())) == sorted(map(len, g.neighbors()))
    assert to_smiles(back) == out


def test_orbit_string_is_stable():
    for text in ("CC(=O)N", "C1CC1O", "C=CC#N", "OCC(N)CO"):
        g = parse_smiles(text)
        ref = to_smiles(g)
        for p in itertools.permutations(range(g.n_nodes)):
            assert to_smiles(permute_sparse(g, Permutation(p))) == ref


def test_to_smiles_rejects_disconnected():
    g = SparseGraph((C, C), ())
    with pytest.raises(MalformedGraphError):
        to_smiles(g)
    assert to_smiles_fragments(SparseGraph((C, O, C), ((2, 0, 0),))) == "CC.O"


def test_fragments_round_trip():
    g = parse_smiles_fragments("CC.O")
    assert g.n_nodes == 3 and check_validity(g) is Validity.DISCONNECTED
    assert to_smiles_fragments(g) == "CC.O"
    with pytest.raises(ParseError) as info:
        parse_smiles_fragments("CC.C(")
    assert info.value.position == 5


def test_validity_examples():
    assert check_validity(parse_smiles("CCO")) is Validity.VALID
    # pentavalent carbon
    assert check_validity(SparseGraph((C,) * 6, tuple((i, 0, 0) for i in range(1, 6)))) is Validity.VALENCE
    assert check_validity(SparseGraph((O, O, O), ((1, 0, 1), (2, 1, 0)))) is Validity.VALENCE
    assert check_validity(SparseGraph((C, C), ())) is Validity.DISCONNECTED
    small = AtomVocabulary.from_symbols(["C"])
    assert check_validity(SparseGraph((1,), ()), small) is Validity.UNKNOWN_ATOM
    assert check_validity(SparseGraph((C, C), ((1, 0, 3),))) is Validity.UNKNOWN_BOND


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["CCO", "CC(C)(C)C", "C1CC1", "C=C=C", "CN(C)C"]), st.randoms())
def test_validity_permutation_invariant(text, rnd):
    g = parse_smiles(text)
    p = list(range(g.n_nodes))
    rnd.shuffle(p)
    assert check_validity(permute_sparse(g, Permutation(tuple(p)))) is check_validity(g)


def test_metrics_hand_computed():
    a, b = parse_smiles("CCO"), parse_smiles("CC=O")
    a_perm = permute_sparse(a, Permutation((2, 0, 1)))
    rep = compute_metrics([a, a_perm, b], [b])
    assert (rep.validity, rep.uniqueness, rep.novelty) == (1.0, 2 / 3, 1 / 2)
    bad = SparseGraph((C, C), ())
    rep = compute_metrics([a, bad, bad, b], {to_smiles(a), to_smiles(b)})
    assert (rep.validity, rep.uniqueness, rep.novelty) == (0.5, 1.0, 0.0)
    assert rep.failures["disconnected"] == 2


def test_metrics_undefined_without_valid_samples():
    bad = SparseGraph((C, C), ())
    rep = compute_metrics([bad], [])
    assert rep.validity == 0.0 and rep.uniqueness is None and rep.novelty is None
    d = json.loads(rep.to_json())
    assert d["uniqueness_defined"] is False and d["failed_disconnected"] == 1
    assert list(d) == sorted(d)


def test_corpus_reports_line_numbers(tmp_path):
    path = tmp_path / "mols.smi"
    path.write_text("# header\nCCO\n\nC1CC\nCC\n")
    with pytest.raises(ParseError, match=":4:"):
        parse_corpus(path)
    graphs, errors = parse_corpus(path, skip_invalid=True)
    assert len(graphs) == 2 and len(errors) == 1 and ":4:" in errors[0]


def test_vocabulary_round_trip():
    v = AtomVocabulary.from_symbols(["O", "C", "N"])
    assert v.symbols == ("C", "N", "O")
    assert AtomVocabulary.from_dict(v.to_dict()) == v
