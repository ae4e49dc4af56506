import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdcoord.functions import EdgeConsensus
from pdcoord.graph import (Graph, complete, edge_op_adjoint, edge_op_apply, edge_operator, erdos_renyi,
                           is_connected, lifted_lipschitz_bound, metropolis_weights, parse_graph_spec,
                           path, read_edge_list, ring, star, torus, write_edge_list)


def test_edge_operator_examples():
    g = path(3)
    np.testing.assert_array_equal(edge_op_apply(g, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 2.0, 3.0])
    np.testing.assert_array_equal(edge_op_adjoint(g, np.array([1.0, 2.0, 3.0, 4.0])), [1.0, 5.0, 4.0])
    r = ring(3)
    np.testing.assert_array_equal(edge_op_adjoint(r, edge_op_apply(r, np.ones(3))), [2.0, 2.0, 2.0])


def test_edge_operator_shape_errors():
    g = path(3)
    with pytest.raises(ValueError):
        edge_op_apply(g, np.zeros(4))
    with pytest.raises(ValueError):
        edge_op_adjoint(g, np.zeros(3))


def random_graph(rng):
    n = int(rng.integers(2, 12))
    return erdos_renyi(n, float(rng.uniform(0.3, 0.9)), int(rng.integers(1 << 30)))


def test_norm_identity_and_adjoint():
    rng = np.random.default_rng(0)
    for _ in range(30):
        g = random_graph(rng)
        x = rng.standard_normal((g.n_nodes, 3))
        y = rng.standard_normal((2 * g.n_edges, 3))
        Mx = edge_op_apply(g, x)
        assert np.sum(Mx ** 2) == pytest.approx(np.sum(g.degrees[:, None] * x ** 2), rel=1e-12)
        assert np.sum(Mx * y) == pytest.approx(np.sum(x * edge_op_adjoint(g, y)), rel=1e-10, abs=1e-12)


def test_gram_is_exactly_degree_on_integers():
    rng = np.random.default_rng(1)
    for _ in range(30):
        g = random_graph(rng)
        x = rng.integers(-1000, 1000, size=(g.n_nodes, 2)).astype(float)
        assert np.array_equal(edge_op_adjoint(g, edge_op_apply(g, x)), g.degrees[:, None] * x)


def test_edge_operator_wrapper():
    g = star(4)
    M = edge_operator(g, dim=2)
    assert M.injective and M.in_shape == (4, 2) and M.out_shape == (6, 2)
    np.testing.assert_array_equal(M.gram_diag[:, 0], [3.0, 1.0, 1.0, 1.0])


def test_lifted_bound_examples():
    assert lifted_lipschitz_bound(ring(5), 4.0) == 2.0
    assert lifted_lipschitz_bound(star(5), 3.0) == 3.0
    with pytest.raises(ValueError):
        lifted_lipschitz_bound(ring(5), -1.0)


def test_connectivity_and_validation():
    assert is_connected(ring(4))
    assert not is_connected(Graph(4, [(0, 1), (2, 3)], require_connected=False))
    with pytest.raises(ValueError, match="not connected"):
        Graph(4, [(0, 1), (2, 3)])
    with pytest.raises(ValueError, match="self-loop"):
        Graph(2, [(1, 1)])
    with pytest.raises(ValueError, match="duplicate"):
        Graph(2, [(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        Graph(2, [(0, 2)])


def test_canonical_order_is_input_independent():
    edges = [(3, 0), (1, 2), (0, 1), (2, 3)]
    a = Graph(4, edges)
    b = Graph(4, [(m, n) for n, m in reversed(edges)])
    assert a.edges == b.edges == [(0, 1), (0, 3), (1, 2), (2, 3)]
    assert np.array_equal(a.endpoints, b.endpoints)


def test_row_bookkeeping():
    g = torus(3, 4)
    for n in range(g.n_nodes):
        assert np.all(g.endpoints[g.own_rows[n]] == n)
        np.testing.assert_array_equal(g.endpoints[g.peer_rows[n]], g.neighbors[n])
    np.testing.assert_array_equal(g.partner_rows[g.partner_rows], np.arange(2 * g.n_edges))


def test_consensus_characterization():
    # Mx lies in the agreement set on every edge iff x is constant on a connected graph
    g = ring(6)
    c = np.full(6, 2.5)
    y = edge_op_apply(g, c)
    np.testing.assert_array_equal(EdgeConsensus().prox(1.0, y), y)
    x = np.arange(6.0)
    y = edge_op_apply(g, x)
    assert not np.array_equal(EdgeConsensus().prox(1.0, y), y)


def test_generators():
    assert torus(5, 5).n_edges == 50 and set(torus(5, 5).degrees) == {4}
    assert complete(5).n_edges == 10
    assert path(4).d_min == 1
    assert ring(7).n_edges == 7
    with pytest.raises(ValueError):
        ring(2)
    with pytest.raises(ValueError):
        torus(2, 5)


def test_erdos_renyi_is_seeded():
    assert erdos_renyi(10, 0.4, 3).edges == erdos_renyi(10, 0.4, 3).edges
    with pytest.raises(RuntimeError):
        erdos_renyi(6, 0.0, 0, max_tries=5)


def test_metropolis_weights():
    rng = np.random.default_rng(2)
    for _ in range(10):
        g = random_graph(rng)
        W = metropolis_weights(g)
        np.testing.assert_allclose(W, W.T, atol=0)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-14)
        assert np.all(W >= 0)
        for a in range(g.n_nodes):
            for b in range(g.n_nodes):
                if a != b and b not in g.neighbors[a]:
                    assert W[a, b] == 0.0
    np.testing.assert_allclose(metropolis_weights(path(2)), [[0.5, 0.5], [0.5, 0.5]])


def test_parse_graph_spec():
    assert parse_graph_spec("ring:5").n_edges == 5
    assert parse_graph_spec("torus:3x4").n_nodes == 12
    assert parse_graph_spec("er:8:0.5", seed=1).edges == erdos_renyi(8, 0.5, 1).edges
    for bad in ("ring:x", "torus:3", "blob:4", "ring:2"):
        with pytest.raises(ValueError):
            parse_graph_spec(bad)


def test_edge_list_round_trip(tmp_path):
    g = torus(3, 3)
    buf = io.StringIO()
    write_edge_list(g, buf)
    again = read_edge_list(io.StringIO("# comment\n\n" + buf.getvalue()))
    assert again.edges == g.edges
    f = tmp_path / "g.txt"
    f.write_text(buf.getvalue())
    assert parse_graph_spec(f"file:{f}").edges == g.edges


def test_edge_list_errors():
    with pytest.raises(ValueError, match="line 2"):
        read_edge_list(io.StringIO("0 1\n0 -1\n"))
    with pytest.raises(ValueError, match="empty"):
        read_edge_list(io.StringIO("# nothing\n"))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2 ** 31 - 1))
def test_adjoint_identity_property(n, seed):
    rng = np.random.default_rng(seed)
    g = erdos_renyi(n, 0.6, seed)
    x, y = rng.standard_normal(n), rng.standard_normal(2 * g.n_edges)
    lhs, rhs = edge_op_apply(g, x) @ y, x @ edge_op_adjoint(g, y)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, np.abs(x).sum() * np.abs(y).sum())
