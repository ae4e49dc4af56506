"""
Communication graphs and the edge-duplication operator.

Edges are stored canonically as ``(n, m)`` with ``n < m`` and sorted
lexicographically. An edge vector is an array whose leading axis has
``2 |E|`` rows: row ``2e`` holds ``y_e(n)`` (lower endpoint) and row
``2e + 1`` holds ``y_e(m)``.
"""

from collections import deque

import numpy as np

from .primal_dual import LinearOperator


class Graph:
    """
    Undirected simple graph on nodes ``0..n_nodes-1``.

    Parameters
    ----------
    n_nodes : int
    edges : iterable of pairs
        Any orientation and order; duplicates and self-loops are rejected.
    require_connected : bool
        Reject disconnected graphs (the default).
    """

    def __init__(self, n_nodes, edges, require_connected=True):
        n_nodes = int(n_nodes)
        if n_nodes < 1:
            raise ValueError("a graph needs at least one node")
        canon = []
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            if not (0 <= a < n_nodes and 0 <= b < n_nodes):
                raise ValueError(f"edge ({a}, {b}) references a node outside 0..{n_nodes - 1}")
            canon.append((min(a, b), max(a, b)))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate edge")
        self.n_nodes = n_nodes
        self.edges = sorted(canon)
        self.neighbors = [[] for _ in range(n_nodes)]
        for a, b in self.edges:
            self.neighbors[a].append(b)
            self.neighbors[b].append(a)
        for nb in self.neighbors:
            nb.sort()
        self.degrees = np.array([len(nb) for nb in self.neighbors], dtype=int)
        if require_connected and not is_connected(self):
            raise ValueError("graph is not connected")

        # endpoints[r]: node owning row r of an edge vector
        self.endpoints = np.array([v for e in self.edges for v in e], dtype=int)
        self.partner_rows = np.arange(2 * len(self.edges)) ^ 1
        row_of = {}
        for e, (a, b) in enumerate(self.edges):
            row_of[(a, b)] = 2 * e
            row_of[(b, a)] = 2 * e + 1
        # own_rows[n][i]: row of lambda_{n, m}(n) for the i-th neighbour m
        self.own_rows = [np.array([row_of[(n, m)] for m in self.neighbors[n]], dtype=int)
                         for n in range(n_nodes)]
        self.peer_rows = [rows ^ 1 for rows in self.own_rows]
        self.neighbor_arrays = [np.array(nb, dtype=int) for nb in self.neighbors]

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def d_min(self):
        return int(self.degrees.min())

    def __repr__(self):
        return f"Graph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


def is_connected(graph):
    """Breadth-first traversal from node 0 reaches every node."""
    seen = np.zeros(graph.n_nodes, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        n = queue.popleft()
        for m in graph.neighbors[n]:
            if not seen[m]:
                seen[m] = True
                queue.append(m)
    return bool(seen.all())


#%% generators

def ring(n):
    if n < 3:
        raise ValueError("a ring needs at least 3 nodes")
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def path(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def complete(n):
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star(n):
    return Graph(n, [(0, j) for j in range(1, n)])


def torus(rows, cols):
    """2-D toroidal grid; each node links to its right and lower neighbours (wrapping)."""
    if rows < 3 or cols < 3:
        raise ValueError("torus sides must be at least 3 to stay a simple graph")
    edges = set()
    for r in range(rows):
        for c in range(cols):
            n = r * cols + c
            for m in (r * cols + (c + 1) % cols, ((r + 1) % rows) * cols + c):
                edges.add((min(n, m), max(n, m)))
    return Graph(rows * cols, edges)


def erdos_renyi(n, prob, seed, max_tries=1000):
    """G(n, prob) conditioned on connectivity by rejection."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    for _ in range(max_tries):
        keep = rng.random(iu[0].size) < prob
        edges = list(zip(iu[0][keep].tolist(), iu[1][keep].tolist()))
        g = Graph(n, edges, require_connected=False)
        if is_connected(g):
            return Graph(n, edges)
    raise RuntimeError(f"no connected G({n}, {prob}) sample in {max_tries} tries")


def parse_graph_spec(spec, seed=0):
    """``ring:N``, ``torus:RxC``, ``complete:N``, ``path:N``, ``star:N``, ``er:N:p``, ``file:path``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "ring":
            return ring(int(arg))
        if kind == "torus":
            r, c = arg.lower().split("x")
            return torus(int(r), int(c))
        if kind == "complete":
            return complete(int(arg))
        if kind == "path":
            return path(int(arg))
        if kind == "star":
            return star(int(arg))
        if kind == "er":
            n, p = arg.split(":")
            return erdos_renyi(int(n), float(p), seed)
    except ValueError as exc:
        raise ValueError(f"bad graph spec {spec!r}: {exc}") from None
    if kind == "file":
        with open(arg) as fh:
            return read_edge_list(fh)
    raise ValueError(f"unknown graph spec {spec!r}")


#%% edge-list files

def read_edge_list(stream, n_nodes=None):
    """One ``n m`` pair per line, 0-based; blank lines and ``#`` comments skipped."""
    edges = []
    for lineno, line in enumerate(stream, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise ValueError(f"line {lineno}: expected two non-negative integers, got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if not edges:
        raise ValueError("edge list is empty")
    if n_nodes is None:
        n_nodes = 1 + max(max(e) for e in edges)
    return Graph(n_nodes, edges)


def write_edge_list(graph, stream):
    for a, b in graph.edges:
        stream.write(f"{a} {b}\n")


#%% edge-duplication operator

def edge_op_apply(graph, x):
    """``(Mx)_e = (x_n, x_m)`` for every edge ``e = {n, m}``, ``n < m``."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != graph.n_nodes:
        raise ValueError(f"expected {graph.n_nodes} node values, got {x.shape[0]}")
    return x[graph.endpoints]


def edge_op_adjoint(graph, y):
    """``(M*y)_n = sum over edges e at n of y_e(n)``."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != 2 * graph.n_edges:
        raise ValueError(f"expected {2 * graph.n_edges} edge rows, got {y.shape[0]}")
    out = np.zeros((graph.n_nodes,) + y.shape[1:])
    np.add.at(out, graph.endpoints, y)
    return out


def edge_operator(graph, dim=None):
    """
    The edge-duplication map as a :class:`LinearOperator`.

    ``M*M`` is diagonal with entry ``d_n`` on node ``n``; ``dim`` is the
    per-node dimension (``None`` for scalar node values).
    """
    shape = (graph.n_nodes,) if dim is None else (graph.n_nodes, dim)
    deg = graph.degrees.astype(float)
    diag = deg if dim is None else np.repeat(deg[:, None], dim, axis=1)
    return LinearOperator(
        apply=lambda x: edge_op_apply(graph, x),
        adjoint=lambda y: edge_op_adjoint(graph, y),
        gram_diag=diag,
        injective=bool(np.all(deg > 0)),
        in_shape=shape,
        out_shape=(2 * graph.n_edges,) + shape[1:],
    )


def lifted_lipschitz_bound(graph, lipschitz):
    """Lipschitz constant ``Lbar / d_min`` of the gradient of ``f o M^{-1}``."""
    if lipschitz < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    return float(lipschitz) / graph.d_min


def metropolis_weights(graph):
    """Symmetric doubly stochastic weights ``1 / (1 + max(d_n, d_m))`` on edges."""
    N = graph.n_nodes
    W = np.zeros((N, N))
    for a, b in graph.edges:
        W[a, b] = W[b, a] = 1.0 / (1.0 + max(graph.degrees[a], graph.degrees[b]))
    W[np.diag_indices(N)] = 1.0 - W.sum(axis=1)
    return W
