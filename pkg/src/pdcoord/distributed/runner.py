"""Drive networked algorithms under a gradient budget and record traces."""

import math
import time

import numpy as np

from ..avgop import DIVERGENCE_BOUND, CoordinateSelector, DivergenceError
from ..graph import metropolis_weights
from ..trace import Trace
from .rounds import (abg_round, check_network_steps, consensus_residual, dadmm_plus_round,
                     dapd_round, dgd_round, initial_network_state, is_antisymmetric, pwg_round)

ALGORITHMS = ("dadmm_plus", "dapd", "dgd", "abg", "pwg")


class ActivationProcess:
    """
    I.i.d. random subsets of agents, one draw per round.

    Wraps a :class:`~pdcoord.avgop.CoordinateSelector` over agents, so every
    agent must be woken with positive probability.
    """

    def __init__(self, selector):
        self.selector = selector

    @classmethod
    def uniform_single(cls, n_agents):
        return cls(CoordinateSelector.uniform_single(n_agents))

    @classmethod
    def everyone(cls, n_agents):
        return cls(CoordinateSelector.full(n_agents))

    @classmethod
    def bernoulli(cls, n_agents, prob):
        """Each agent wakes independently with probability ``prob`` (empty set allowed)."""
        if not 0 < prob <= 1:
            raise ValueError("wake-up probability must be in (0, 1]")
        if n_agents > 16:
            raise ValueError("explicit Bernoulli support is limited to 16 agents")
        support = []
        for mask in range(2 ** n_agents):
            subset = [n for n in range(n_agents) if mask >> n & 1]
            k = len(subset)
            support.append((subset, prob ** k * (1 - prob) ** (n_agents - k)))
        return cls(CoordinateSelector(support, n_agents))

    @property
    def n_agents(self):
        return self.selector.n_blocks

    def sample(self, rng):
        return self.selector.sample(rng)


def decaying_step(gamma0, k, power=0.75):
    """``gamma0 / k**power`` for round ``k >= 1``."""
    return gamma0 / k ** power


def _diverged(X):
    return not np.all(np.isfinite(X)) or np.abs(X).max() > DIVERGENCE_BOUND


def run_distributed(algorithm, problem, graph, params, activation=None, seed=0, budget=10**4,
                    record_every=None, timing=False, X0=None, Lam0=None, evaluate_at="agent",
                    validate=True, max_rounds=None):
    """
    Run ``algorithm`` until ``budget`` local gradients have been spent.

    Parameters
    ----------
    algorithm : {"dadmm_plus", "dapd", "dgd", "abg", "pwg"}
    problem : DistributedProblem
    graph : Graph
    params : StepSizes or float
        ``(tau, rho)`` for the primal-dual methods, the initial step
        ``gamma0`` of the ``gamma0 / k**0.75`` schedule for the gossip ones.
    activation : ActivationProcess, optional
        Who wakes up each round (DAPD) or who the waker is (ABG, PWG).
        Defaults to one uniformly drawn agent.
    seed : int
        Seeds the only random stream; draws happen round by round, so a
        larger budget extends the same trajectory.
    budget : int
        Gradient budget; the run stops at the first round that reaches it.
    record_every : int, optional
        Record whenever the gradient count crosses a multiple of this value
        (default: one record per round).
    timing : bool
        Fill the ``seconds`` column with wall-clock time; zero otherwise.
    evaluate_at : {"agent", "average"}
        Evaluate the objective at agent 0's estimate or at the node average.
    validate : bool
        Check step sizes (and dual antisymmetry for DADMM+) before the
        first round. The grid search switches this off to scan steps
        beyond the theoretical range.

    Returns
    -------
    Trace

    Raises
    ------
    DivergenceError
        When iterates become non-finite or exceed the divergence bound; the
        partial trace is attached as ``err.trace``.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if graph.n_nodes != problem.n_agents:
        raise ValueError("graph size does not match the number of agents")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    activation = activation or ActivationProcess.uniform_single(graph.n_nodes)
    if activation.n_agents != graph.n_nodes:
        raise ValueError("activation process is defined over the wrong number of agents")
    state = initial_network_state(problem, graph, X0, Lam0)
    if validate and algorithm in ("dadmm_plus", "dapd"):
        check_network_steps(problem, graph, params)
        if algorithm == "dadmm_plus" and not is_antisymmetric(state.Lam, graph):
            raise ValueError("DADMM+ needs antisymmetric initial duals")
    if algorithm in ("dgd", "abg", "pwg"):
        gamma0 = float(params)
        if not gamma0 > 0:
            raise ValueError("initial step must be positive")
    if algorithm in ("abg", "pwg") and any(len(s) != 1 for s in activation.selector.subsets):
        raise ValueError("gossip baselines wake exactly one agent per round")
    weights = metropolis_weights(graph) if algorithm == "dgd" else None
    rng = np.random.default_rng(seed)
    nbrs = graph.neighbor_arrays

    trace = Trace()
    start = time.perf_counter()

    def record():
        x = state.X[0] if evaluate_at == "agent" else state.X.mean(axis=0)
        seconds = time.perf_counter() - start if timing else 0.0
        trace.append(state.k, state.grads, problem.objective(x), consensus_residual(state.X), seconds)

    record()
    step = record_every or 1
    next_mark = step
    while state.grads < budget and (max_rounds is None or state.k < max_rounds):
        k = state.k + 1
        if algorithm == "dadmm_plus":
            state = dadmm_plus_round(problem, graph, params, state, validate=False)
        elif algorithm == "dapd":
            state = dapd_round(problem, graph, params, state, activation.sample(rng),
                               inplace=True, validate=False)
        elif algorithm == "dgd":
            state = dgd_round(problem, weights, decaying_step(gamma0, k), state)
        elif algorithm == "abg":
            waker = activation.sample(rng)[0]
            state = abg_round(problem, graph, decaying_step(gamma0, k), state, waker, inplace=True)
        else:
            waker = activation.sample(rng)[0]
            partner = int(nbrs[waker][rng.integers(len(nbrs[waker]))])
            state = pwg_round(problem, graph, decaying_step(gamma0, k), state, waker, partner,
                              inplace=True)
        if state.grads >= next_mark or state.grads >= budget:
            record()
            next_mark = (state.grads // step + 1) * step
            if _diverged(state.X) or not math.isfinite(trace.last.objective):
                err = DivergenceError(state.k)
                err.trace = trace
                raise err
    if trace.last.k != state.k:
        record()
    return trace
