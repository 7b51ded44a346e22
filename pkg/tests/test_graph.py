import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spgc.exceptions import MalformedGraphError, SchemaError
from spgc.graph import (
    DatasetSchema,
    DenseGraph,
    Permutation,
    SparseGraph,
    induced_edge_permutation,
    is_sorted_row_major,
    permute_dense,
    permute_sparse,
    random_graph,
    read_dataset,
    to_dense,
    to_sparse,
    write_dataset,
)


@st.composite
def graphs(draw, max_nodes=6, n_V=3, n_E=3):
    n = draw(st.integers(1, max_nodes))
    pairs = [(a, b) for a in range(n) for b in range(a)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    nodes = tuple(draw(st.lists(st.integers(0, n_V - 1), min_size=n, max_size=n)))
    edges = tuple((a, b, draw(st.integers(0, n_E - 1))) for a, b in chosen)
    return SparseGraph(nodes, edges)


@st.composite
def graph_and_perm(draw, max_nodes=6):
    g = draw(graphs(max_nodes))
    p = draw(st.permutations(range(g.n_nodes)))
    return g, Permutation(tuple(p))


def test_edges_are_normalised_to_src_greater_than_dst():
    g = SparseGraph((0, 1, 2), ((0, 1, 0), (1, 2, 1)))
    assert g.edges == ((1, 0, 0), (2, 1, 1))


@pytest.mark.parametrize(
    "nodes,edges",
    [
        ((0, 0), ((1, 1, 0),)),  # self-loop
        ((0, 0), ((1, 0, 0), (0, 1, 1))),  # duplicate unordered pair
        ((0, 0), ((2, 0, 0),)),  # endpoint out of range
        ((), ()),
        ((0, -1), ()),
    ],
)
def test_malformed_graphs_rejected(nodes, edges):
    with pytest.raises(MalformedGraphError):
        SparseGraph(nodes, edges)


def test_dense_round_trip_small():
    g = SparseGraph((1, 0, 2), ((2, 0, 1), (1, 0, 0)))
    d = to_dense(g)
    assert d.adj[2, 0] == d.adj[0, 2] == 2
    back = to_sparse(d)
    assert back.edges == ((1, 0, 0), (2, 0, 1))
    assert is_sorted_row_major(back)


def test_dense_graph_rejects_asymmetry():
    with pytest.raises(MalformedGraphError):
        DenseGraph(np.array([0, 0]), np.array([[0, 1], [0, 0]]))


def test_permutation_one_based_and_inverse():
    p = Permutation.from_one_based([3, 1, 4, 2])
    assert tuple(p) == (2, 0, 3, 1)
    assert p.to_one_based() == (3, 1, 4, 2)
    assert tuple(p.compose(p.inverse())) == (0, 1, 2, 3)


def test_induced_edge_permutation_on_path_fixture():
    # path 1-0, 2-0, 3-2: relabelling by (3,1,4,2) moves last edge first
    g = SparseGraph((0, 0, 0, 0), ((1, 0, 0), (2, 0, 0), (3, 2, 0)))
    q = induced_edge_permutation(Permutation.from_one_based([3, 1, 4, 2]), g)
    assert q.to_one_based() == (2, 3, 1)


@settings(max_examples=200, deadline=None)
@given(graph_and_perm())
def test_commuting_diagram(gp):
    g, p = gp
    assert permute_sparse(g, p) == to_sparse(permute_dense(to_dense(g), p))


@settings(max_examples=200, deadline=None)
@given(graph_and_perm())
def test_induced_edge_permutation_maps_edges(gp):
    g, p = gp
    h = permute_sparse(g, p)
    q = induced_edge_permutation(p, g)
    inv = p.inverse()
    for k, (s, d, t) in enumerate(h.edges):
        os_, od, ot = g.edges[q[k]]
        assert {inv[os_], inv[od]} == {s, d} and ot == t


@settings(max_examples=100, deadline=None)
@given(graph_and_perm())
def test_permute_then_inverse_is_identity(gp):
    g, p = gp
    back = permute_sparse(permute_sparse(g, p), p.inverse())
    assert back == to_sparse(to_dense(g))


@settings(max_examples=100, deadline=None)
@given(graphs())
def test_dense_sparse_round_trip(g):
    assert to_sparse(to_dense(g)) == permute_sparse(g, Permutation.identity(g.n_nodes))
    assert sorted(to_sparse(to_dense(g)).edges) == sorted(g.edges)


def test_permutation_size_mismatch():
    g = SparseGraph((0, 0), ((1, 0, 0),))
    with pytest.raises(ValueError):
        permute_sparse(g, Permutation.identity(3))


def test_schema_inference_and_check():
    gs = [SparseGraph((0, 2), ((1, 0, 1),)), SparseGraph((1,), ())]
    s = DatasetSchema.from_graphs(gs)
    assert (s.n_max, s.m_max, s.n_V, s.n_E) == (2, 1, 3, 2)
    with pytest.raises(SchemaError):
        s.check(SparseGraph((0, 0, 0), ()))


def test_dataset_round_trip(tmp_path):
    gs = [random_graph(DatasetSchema(5, 6, 3, 2), seed) for seed in range(10)]
    path = tmp_path / "d.jsonl"
    write_dataset(path, gs, header={"atoms": {"symbols": ["C"]}})
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first["schema"]) == {"n_max", "m_max", "n_V", "n_E"}
    schema, back, header = read_dataset(path, with_header=True)
    assert back == gs and header == {"atoms": {"symbols": ["C"]}}
    assert schema == DatasetSchema.from_graphs(gs)


def test_dataset_reader_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"nodes":[0,0],"edges":[[1,0,0]]}\n{"nodes":[0],"edges":[[0,0,0]]}\n')
    with pytest.raises(MalformedGraphError, match=":2:"):
        read_dataset(path)


def test_random_graph_is_simple_and_sorted():
    s = DatasetSchema(6, 8, 2, 3)
    for seed in range(50):
        g = random_graph(s, seed)
        s.check(g)
        assert is_sorted_row_major(g)


def test_all_permutations_small():
    g = SparseGraph((0, 1, 1, 0), ((1, 0, 0), (2, 1, 1), (3, 0, 2)))
    for p in itertools.permutations(range(4)):
        p = Permutation(p)
        assert permute_sparse(g, p) == to_sparse(permute_dense(to_dense(g), p))
