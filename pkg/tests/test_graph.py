import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from admmnet.graph import (
    Graph,
    GraphError,
    compute_spectrum,
    generate_connected_graph,
    is_bipartite,
    is_connected,
    metropolis_weights,
    read_edge_list,
    write_edge_list,
)

from conftest import complete, cycle, path


def brute_force_bipartite(g):
    # exhaustive search over all 2-colorings
    n = g.n_agents
    edges = g.edges()
    for bits in itertools.product((0, 1), repeat=n - 1):
        color = (0,) + bits
        if all(color[i] != color[j] for i, j in edges):
            return True
    return False


def test_two_agents_full_probability_is_k2():
    g = generate_connected_graph(2, 1.0, seed=123)
    assert g.edges() == [(0, 1)]


def test_three_agents_full_probability_is_triangle():
    g = generate_connected_graph(3, 1.0, seed=5)
    assert g == complete(3)


def test_sparse_graph_forced_non_bipartite():
    g = generate_connected_graph(8, 0.3, seed=7, force_non_bipartite=True)
    assert is_connected(g)
    assert not is_bipartite(g)
    assert not brute_force_bipartite(g)


def test_generation_is_reproducible():
    a = generate_connected_graph(9, 0.35, seed=11)
    b = generate_connected_graph(9, 0.35, seed=11)
    np.testing.assert_array_equal(a.adjacency, b.adjacency)


def test_generation_errors():
    with pytest.raises(GraphError):
        generate_connected_graph(1, 0.5, seed=0)
    with pytest.raises(GraphError, match="3 tries"):
        generate_connected_graph(30, 0.001, seed=0, max_tries=3)
    with pytest.raises(GraphError):
        generate_connected_graph(4, 0.0, seed=0)


def test_is_connected_examples():
    assert is_connected(complete(2))
    assert not is_connected(Graph.from_edges(4, [(0, 1), (2, 3)], check=False))
    assert is_connected(path(4))


def test_disconnected_rejected_by_default():
    with pytest.raises(GraphError):
        Graph.from_edges(4, [(0, 1), (2, 3)])


def test_invalid_adjacency():
    with pytest.raises(GraphError):
        Graph(np.array([[0, 1], [0, 0]], dtype=bool))
    with pytest.raises(GraphError):
        Graph(np.array([[1, 1], [1, 0]], dtype=bool))


def test_is_bipartite_examples():
    assert is_bipartite(cycle(4))
    assert not is_bipartite(complete(3))
    assert is_bipartite(path(3))


def test_neighbor_lists_and_degrees():
    g = path(4)
    assert g.neighbor_lists == ((1,), (0, 2), (1, 3), (2,))
    assert g.degrees.tolist() == [1, 2, 2, 1]
    indptr, indices = g.csr()
    assert indptr.tolist() == [0, 1, 3, 5, 6]
    assert indices.tolist() == [1, 0, 2, 1, 3, 2]


@pytest.mark.parametrize(
    "g, expected, bip",
    [(complete(2), 0.0, True), (cycle(4), 0.0, True), (complete(3), 1.0, False)],
    ids=["K2", "C4", "K3"],
)
def test_lambda_min_small_graphs(g, expected, bip):
    sp = compute_spectrum(g)
    D = np.diag(g.degrees.astype(float))
    oracle = np.linalg.eigvalsh(D + g.adjacency.astype(float))[0]
    assert sp.lambda_min_d_plus_w == pytest.approx(expected, abs=1e-8)
    assert oracle == pytest.approx(expected, abs=1e-8)
    assert sp.bipartite is bip


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), p=st.floats(0.2, 1.0), seed=st.integers(0, 10**6), force=st.booleans())
def test_spectrum_properties_random_graphs(n, p, seed, force):
    if force and n < 3:
        force = False
    g = generate_connected_graph(n, p, seed, force_non_bipartite=force)
    sp = compute_spectrum(g)
    bip = brute_force_bipartite(g)
    assert sp.bipartite == bip
    assert sp.lambda_min_d_plus_w >= -1e-9 * sp.lambda_max_d_plus_w
    assert (sp.lambda_min_d_plus_w > 1e-9) == (not bip)
    assert np.abs(sp.laplacian @ np.ones(n)).max() <= 1e-12
    if force:
        assert not bip


def test_metropolis_weights_doubly_stochastic():
    g = generate_connected_graph(10, 0.3, seed=3)
    Wm = metropolis_weights(g)
    np.testing.assert_allclose(Wm.sum(axis=1), 1.0, atol=1e-15)
    np.testing.assert_array_equal(Wm, Wm.T)
    assert np.all(Wm >= 0)
    assert np.all(Wm[~g.adjacency & ~np.eye(10, dtype=bool)] == 0)


def test_edge_list_roundtrip(tmp_path):
    g = generate_connected_graph(7, 0.5, seed=2)
    f = tmp_path / "g.txt"
    write_edge_list(g, f)
    text = f.read_text().splitlines()
    assert text[0] == "agents 7"
    assert read_edge_list(f) == g


def test_edge_list_errors(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("0 1\n")
    with pytest.raises(GraphError, match="header"):
        read_edge_list(f)
    f.write_text("agents 2\n0 5\n")
    with pytest.raises(GraphError, match="out of range"):
        read_edge_list(f)
