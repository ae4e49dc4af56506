"""
Message-passing simulation of DADMM+ and DAPD.

Each agent only touches its own memory: its estimate, the duals it owns,
and the last values received from its neighbours. Messages sent during
round ``k`` are delivered at the start of round ``k + 1``, reliably and in
order. This is the protocol-level reference for the array implementation
in :mod:`pdcoord.distributed.rounds`.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .rounds import check_network_steps, is_antisymmetric


@dataclass
class AgentState:
    node: int
    x: np.ndarray
    lambda_out: Dict[int, np.ndarray]
    lambda_in: Dict[int, np.ndarray]
    x_in: Dict[int, np.ndarray]
    grad_count: int = 0


@dataclass
class Message:
    sender: int
    x: np.ndarray
    lam: np.ndarray = None


class SimNetwork:
    """Agents plus per-agent FIFO mailboxes and a virtual clock."""

    def __init__(self, problem, graph, steps, X0=None, Lam0=None):
        p = problem.dim
        X0 = np.zeros((graph.n_nodes, p)) if X0 is None else np.asarray(X0, dtype=float).reshape(graph.n_nodes, p)
        Lam0 = (np.zeros((2 * graph.n_edges, p)) if Lam0 is None
                else np.asarray(Lam0, dtype=float).reshape(2 * graph.n_edges, p))
        self.problem, self.graph, self.steps = problem, graph, steps
        self.clock = 0
        self.mailboxes = [deque() for _ in range(graph.n_nodes)]
        self.agents = []
        for n in range(graph.n_nodes):
            nbrs = graph.neighbors[n]
            own, peer = graph.own_rows[n], graph.peer_rows[n]
            self.agents.append(AgentState(
                node=n,
                x=X0[n].copy(),
                lambda_out={m: Lam0[r].copy() for m, r in zip(nbrs, own)},
                lambda_in={m: Lam0[r].copy() for m, r in zip(nbrs, peer)},
                x_in={m: X0[m].copy() for m in nbrs},
            ))

    def send(self, sender, receiver, x, lam=None):
        if receiver not in self.agents[sender].x_in:
            raise ValueError(f"agent {sender} cannot reach non-neighbour {receiver}")
        self.mailboxes[receiver].append(Message(sender, np.array(x), None if lam is None else np.array(lam)))

    def deliver(self):
        for agent, box in zip(self.agents, self.mailboxes):
            while box:
                msg = box.popleft()
                agent.x_in[msg.sender] = msg.x
                if msg.lam is not None:
                    agent.lambda_in[msg.sender] = msg.lam

    def _local_step(self, agent, sign):
        """Shared x-update; ``sign`` is -1 for DADMM+ (own duals) and +1 for DAPD (received duals)."""
        tau, rho = self.steps.tau, self.steps.rho
        n, d = agent.node, len(agent.x_in)
        acc = np.zeros_like(agent.x)
        for m in sorted(agent.x_in):
            lam = agent.lambda_out[m] if sign < 0 else agent.lambda_in[m]
            acc += agent.x_in[m] / rho + sign * lam
        v = (1 - tau / rho) * agent.x - (tau / d) * self.problem.grad(n, agent.x) + (tau / d) * acc
        agent.grad_count += 1
        return self.problem.prox(n, tau / d, v)

    def dadmm_plus_round(self):
        self.deliver()
        rho = self.steps.rho
        updates = []
        for agent in self.agents:
            lam_new = {m: agent.lambda_out[m] + (agent.x - xm) / (2 * rho) for m, xm in agent.x_in.items()}
            updates.append((lam_new, self._local_step(agent, -1)))
        for agent, (lam_new, x_new) in zip(self.agents, updates):
            agent.lambda_out, agent.x = lam_new, x_new
            for m in agent.x_in:
                self.send(agent.node, m, x_new)
        self.clock += 1

    def dapd_round(self, active):
        self.deliver()
        rho = self.steps.rho
        updates = []
        for n in active:
            agent = self.agents[n]
            lam_new = {m: 0.5 * (agent.lambda_out[m] - agent.lambda_in[m]) + (agent.x - agent.x_in[m]) / (2 * rho)
                       for m in agent.x_in}
            updates.append((agent, lam_new, self._local_step(agent, +1)))
        for agent, lam_new, x_new in updates:
            agent.lambda_out, agent.x = lam_new, x_new
            for m in agent.x_in:
                self.send(agent.node, m, x_new, lam_new[m])
        self.clock += 1

    def snapshot(self):
        """Current ``(X, Lam)`` in the array layout."""
        g = self.graph
        X = np.stack([a.x for a in self.agents])
        Lam = np.empty((2 * g.n_edges, X.shape[1]))
        for a in self.agents:
            for m, r in zip(g.neighbors[a.node], g.own_rows[a.node]):
                Lam[r] = a.lambda_out[m]
        return X, Lam


def simulate(problem, graph, steps, algorithm, rounds, activations=None, X0=None, Lam0=None):
    """
    Run ``rounds`` rounds of ``"dadmm_plus"`` or ``"dapd"`` on a fresh network.

    ``activations`` is the sequence of active sets for DAPD.
    """
    check_network_steps(problem, graph, steps)
    net = SimNetwork(problem, graph, steps, X0, Lam0)
    if algorithm == "dadmm_plus":
        if not is_antisymmetric(net.snapshot()[1], graph):
            raise ValueError("DADMM+ needs antisymmetric initial duals")
        for _ in range(rounds):
            net.dadmm_plus_round()
    elif algorithm == "dapd":
        for k in range(rounds):
            net.dapd_round(activations[k])
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return net
