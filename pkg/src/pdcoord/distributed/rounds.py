"""
One round of each networked algorithm, on array state.

Node values live in an ``(N, p)`` array ``X``; edge duals in a
``(2|E|, p)`` array ``Lam`` laid out like an edge vector, so row
``graph.own_rows[n][i]`` is ``lambda_{n,m}(n)`` for the ``i``-th neighbour
``m`` of ``n`` and ``graph.peer_rows[n][i]`` is ``lambda_{n,m}(m)``. Every
round reads the round-``k`` snapshot only.
"""

from dataclasses import dataclass

import numpy as np

from ..avgop import FixedPointOperator
from ..primal_dual import StepSizeError, averagedness_constant


@dataclass
class NetworkState:
    X: np.ndarray
    Lam: np.ndarray
    grads: int = 0
    k: int = 0

    def copy(self):
        return NetworkState(self.X.copy(), self.Lam.copy(), self.grads, self.k)


def initial_network_state(problem, graph, X0=None, Lam0=None):
    p = problem.dim
    X = np.zeros((graph.n_nodes, p)) if X0 is None else np.array(X0, dtype=float).reshape(graph.n_nodes, p)
    Lam = (np.zeros((2 * graph.n_edges, p)) if Lam0 is None
           else np.array(Lam0, dtype=float).reshape(2 * graph.n_edges, p))
    return NetworkState(X, Lam)


def check_network_steps(problem, graph, steps):
    """
    Distributed step condition ``1/tau - 1/rho > Lbar / (2 d_min)``.

    Returns the averagedness constant of the underlying operator.
    """
    if graph.n_nodes < 2:
        raise ValueError("networked methods need at least two agents")
    tau, rho = float(steps.tau), float(steps.rho)
    if not (tau > 0 and rho > 0):
        raise StepSizeError("tau and rho must be positive", margin=-np.inf)
    gap = 1.0 / tau - 1.0 / rho
    bound = problem.lipschitz / (2 * graph.d_min)
    if problem.f_is_zero:
        if gap < 0:
            raise StepSizeError(f"1/tau - 1/rho = {gap:.6g} must be nonnegative", margin=gap)
        return averagedness_constant(tau, rho, 0.0)
    if not gap > bound:
        raise StepSizeError(
            f"1/tau - 1/rho = {gap:.6g} must exceed Lbar/(2 d_min) = {bound:.6g}", margin=gap - bound)
    return averagedness_constant(tau, rho, problem.lipschitz / graph.d_min)


def is_antisymmetric(Lam, graph, tol=0.0):
    return bool(np.all(np.abs(Lam + Lam[graph.partner_rows]) <= tol))


def dadmm_plus_round(problem, graph, steps, state, validate=True):
    """
    Synchronous round of distributed ADMM+.

    ``lambda_{n,m}(n) += (x_n - x_m) / (2 rho)`` and
    ``x_n = prox_{tau g_n/d_n}[(1 - tau/rho) x_n - (tau/d_n) grad f_n(x_n)
    + (tau/d_n) sum_m (x_m/rho - lambda_{n,m}(n))]``, all from round-``k``
    values. The duals must satisfy ``lambda_{n,m}(n) = -lambda_{n,m}(m)``;
    the update preserves this exactly.
    """
    if validate:
        check_network_steps(problem, graph, steps)
        if not is_antisymmetric(state.Lam, graph):
            raise ValueError("DADMM+ needs antisymmetric duals lambda_{n,m}(n) = -lambda_{n,m}(m)")
    tau, rho = steps.tau, steps.rho
    X, Lam = state.X, state.Lam
    ends = X[graph.endpoints]
    other = ends[graph.partner_rows]
    Lam1 = Lam + (ends - other) / (2 * rho)
    S = np.zeros_like(X)
    np.add.at(S, graph.endpoints, other / rho - Lam)
    d = graph.degrees[:, None].astype(float)
    V = (1 - tau / rho) * X - (tau / d) * problem.grads(X) + (tau / d) * S
    if problem.g_is_zero:
        X1 = V
    else:
        X1 = np.stack([problem.prox(n, tau / d[n, 0], V[n]) for n in range(graph.n_nodes)])
    return NetworkState(X1, Lam1, state.grads + graph.n_nodes, state.k + 1)


def dapd_agent_update(problem, graph, steps, X, Lam, n):
    """New ``(lambda rows owned by n, x_n)`` for an active agent ``n``."""
    tau, rho = steps.tau, steps.rho
    own, peer, nb = graph.own_rows[n], graph.peer_rows[n], graph.neighbor_arrays[n]
    d = graph.degrees[n]
    xn, Xm, lam_peer = X[n], X[nb], Lam[peer]
    lam_own = 0.5 * (Lam[own] - lam_peer) + (xn - Xm) / (2 * rho)
    v = ((1 - tau / rho) * xn - (tau / d) * problem.grad(n, xn)
         + (tau / d) * (Xm / rho + lam_peer).sum(axis=0))
    return lam_own, problem.prox(n, tau / d, v)


def dapd_round(problem, graph, steps, state, active, inplace=False, validate=True):
    """
    Asynchronous round: only agents in ``active`` update, from the round-``k`` snapshot.

    ``lambda_{n,m}(n) = (lambda_{n,m}(n) - lambda_{n,m}(m))/2 + (x_n - x_m)/(2 rho)``
    and ``x_n = prox_{tau g_n/d_n}[(1 - tau/rho) x_n - (tau/d_n) grad f_n(x_n)
    + (tau/d_n) sum_m (x_m/rho + lambda_{n,m}(m))]``. Inactive agents keep
    their values. An empty ``active`` set is a no-op round.
    """
    if validate:
        check_network_steps(problem, graph, steps)
    active = list(active)
    if any(not 0 <= n < graph.n_nodes for n in active):
        raise ValueError("active set contains an unknown agent")
    if len(set(active)) != len(active):
        raise ValueError("active set has repeated agents")
    out = state if inplace else state.copy()
    if len(active) == 1:
        # a lone agent writes only its own rows, so the snapshot is implicit
        n = active[0]
        lam_own, xn = dapd_agent_update(problem, graph, steps, state.X, state.Lam, n)
        out.Lam[graph.own_rows[n]] = lam_own
        out.X[n] = xn
    else:
        X, Lam = (state.X.copy(), state.Lam.copy()) if inplace else (state.X, state.Lam)
        for n in active:
            lam_own, xn = dapd_agent_update(problem, graph, steps, X, Lam, n)
            out.Lam[graph.own_rows[n]] = lam_own
            out.X[n] = xn
    out.grads += len(active)
    out.k += 1
    return out


#%% DAPD as block-coordinate KM on the Vu-Condat operator

def agent_block_layout(graph, p):
    return [(int(d) + 1) * p for d in graph.degrees]


def pack_agent_blocks(graph, X, Lam):
    """Flat vector ordered agent by agent: ``(lambda_{n,m}(n))_m`` then ``x_n``."""
    return np.concatenate([np.concatenate([Lam[graph.own_rows[n]].ravel(), X[n]])
                           for n in range(graph.n_nodes)])


def unpack_agent_blocks(graph, s, p):
    X = np.empty((graph.n_nodes, p))
    Lam = np.empty((2 * graph.n_edges, p))
    pos = 0
    for n in range(graph.n_nodes):
        d = graph.degrees[n]
        Lam[graph.own_rows[n]] = s[pos:pos + d * p].reshape(d, p)
        pos += d * p
        X[n] = s[pos:pos + p]
        pos += p
    return X, Lam


def agent_block_metric(graph, steps, p):
    """
    Per-agent blocks of ``[[I/tau, I], [I, rho I]]`` on ``(y = Mx, lambda)``.

    On agent ``n``'s block ``(lambda_{e}(n))_e, x_n`` this is
    ``rho ||lambda||^2 + 2 sum_e <lambda_e(n), x_n> + (d_n/tau) ||x_n||^2``.
    """
    blocks = []
    for d in graph.degrees:
        d = int(d)
        B = np.tile(np.eye(p), (d, 1))
        V = np.block([[steps.rho * np.eye(d * p), B], [B.T, (d / steps.tau) * np.eye(p)]])
        blocks.append(V)
    return blocks


def dapd_operator(problem, graph, steps):
    """
    The synchronous primal-dual map with one block per agent.

    Block ``n`` of the output is exactly what agent ``n`` computes when it
    wakes up, so randomized KM iterations with relaxation 1 on this
    operator reproduce DAPD.
    """
    alpha = check_network_steps(problem, graph, steps)
    p = problem.dim

    def apply_block(n, s):
        X, Lam = unpack_agent_blocks(graph, s, p)
        lam_own, xn = dapd_agent_update(problem, graph, steps, X, Lam, n)
        return np.concatenate([lam_own.ravel(), xn])

    def apply(s):
        X, Lam = unpack_agent_blocks(graph, s, p)
        parts = []
        for n in range(graph.n_nodes):
            lam_own, xn = dapd_agent_update(problem, graph, steps, X, Lam, n)
            parts.extend([lam_own.ravel(), xn])
        return np.concatenate(parts)

    return FixedPointOperator(apply, agent_block_layout(graph, p), alpha, apply_block=apply_block,
                              metric=agent_block_metric(graph, steps, p))


#%% baselines

def _require_smooth(problem):
    if not problem.g_is_zero:
        raise ValueError("gradient baselines need g_n = 0")


def dgd_round(problem, weights, gamma, state):
    """Each agent takes a gradient step, then averages with Metropolis weights."""
    _require_smooth(problem)
    W = np.asarray(weights)
    if np.any(W < -1e-15) or not np.allclose(W.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("weights must be row-stochastic")
    Y = state.X - gamma * problem.grads(state.X)
    N = state.X.shape[0]
    return NetworkState(W @ Y, state.Lam, state.grads + N, state.k + 1)


def abg_round(problem, graph, gamma, state, waker, inplace=False):
    """
    Broadcast gossip: every neighbour ``m`` of ``waker`` replaces ``x_m`` by
    ``(x_m + x_waker)/2`` and then takes a gradient step. The waker is idle.
    """
    _require_smooth(problem)
    out = state if inplace else state.copy()
    xw = state.X[waker].copy()
    for m in graph.neighbors[waker]:
        v = 0.5 * (out.X[m] + xw)
        out.X[m] = v - gamma * problem.grad(m, v)
    out.grads += len(graph.neighbors[waker])
    out.k += 1
    return out


def pwg_round(problem, graph, gamma, state, waker, partner, inplace=False):
    """Pairwise gossip: both agents take a gradient step, then both keep the mean."""
    _require_smooth(problem)
    if partner not in graph.neighbors[waker]:
        raise ValueError(f"agent {partner} is not adjacent to agent {waker}")
    out = state if inplace else state.copy()
    a = state.X[waker] - gamma * problem.grad(waker, state.X[waker])
    b = state.X[partner] - gamma * problem.grad(partner, state.X[partner])
    mean = 0.5 * (a + b)
    out.X[waker] = mean
    out.X[partner] = mean
    out.grads += 2
    out.k += 1
    return out


def consensus_residual(X):
    """``max_n ||x_n - mean(x)||``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return float(np.max(np.linalg.norm(X - X.mean(axis=0), axis=1)))
