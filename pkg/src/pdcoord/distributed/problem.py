"""Networked problems ``min_x sum_n f_n(x) + g_n(x)``."""

import numpy as np

from ..functions import EdgeConsensus, RowSeparable, ZeroFunction, is_zero
from ..graph import edge_operator, lifted_lipschitz_bound
from ..primal_dual import CompositeProblem


class DistributedProblem:
    """
    Private terms ``(f_n, g_n)`` held by each agent.

    Parameters
    ----------
    f_terms : list of SmoothTerm
    g_terms : list of ProxableTerm, optional
        Defaults to zero functions.
    dim : int
        Dimension of the shared decision variable; node values are stored
        as rows of an ``(N, dim)`` array.
    objective : callable, optional
        Centralized ``F(x) = sum_n f_n(x) + g_n(x)``; supply a vectorized
        version when summing the local terms is too slow.
    lipschitz : float, optional
        Common constant ``Lbar`` of the ``grad f_n``; defaults to the largest
        declared constant.
    """

    def __init__(self, f_terms, g_terms=None, dim=1, objective=None, lipschitz=None):
        self.f_terms = list(f_terms)
        self.g_terms = list(g_terms) if g_terms is not None else [ZeroFunction()] * len(self.f_terms)
        if len(self.g_terms) != len(self.f_terms):
            raise ValueError("need one g_n per f_n")
        self.dim = int(dim)
        self._objective = objective
        self.lipschitz = (float(max(t.lipschitz for t in self.f_terms))
                          if lipschitz is None else float(lipschitz))
        self.g_is_zero = all(is_zero(g) for g in self.g_terms)
        self.f_is_zero = all(is_zero(f) for f in self.f_terms)

    @property
    def n_agents(self):
        return len(self.f_terms)

    def grad(self, n, x):
        return self.f_terms[n].grad(x)

    def grads(self, X):
        return np.stack([f.grad(x) for f, x in zip(self.f_terms, X)])

    def prox(self, n, gamma, v):
        g = self.g_terms[n]
        return v if is_zero(g) else g.prox(gamma, v)

    def objective(self, x):
        if self._objective is not None:
            return self._objective(x)
        return float(sum(f.value(x) + g.value(x) for f, g in zip(self.f_terms, self.g_terms)))

    def lifted(self, graph):
        """The consensus reformulation ``f(x) + g(x) + h(Mx)`` over ``graph``."""
        if graph.n_nodes != self.n_agents:
            raise ValueError("graph size does not match the number of agents")
        f = ZeroFunction() if self.f_is_zero else RowSeparable(self.f_terms)
        g = ZeroFunction() if self.g_is_zero else RowSeparable(self.g_terms)
        L = 0.0 if self.f_is_zero else lifted_lipschitz_bound(graph, self.lipschitz)
        return CompositeProblem(f, g, EdgeConsensus(), edge_operator(graph, self.dim), lipschitz=L)
