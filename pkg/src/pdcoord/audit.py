"""
Quick self-audit of the numerical invariants, run by ``pdcoord check``.

Each check draws a few random instances from a seeded generator and
compares two independent computations of the same quantity.
"""

import numpy as np

from .avgop import CoordinateSelector, FixedPointOperator, averagedness_gap, expected_descent_check
from .dataio import SparseDataset, format_libsvm, parse_libsvm, standardize
from .distributed import (DistributedProblem, dadmm_plus_round, dapd_operator, dapd_round,
                          initial_network_state)
from .distributed.rounds import pack_agent_blocks
from .functions import SquaredDistance, prox_l1
from .graph import edge_op_adjoint, edge_op_apply, erdos_renyi
from .primal_dual import (StepSizes, admm_plus_step, initial_state, lift_problem,
                          vu_condat_operator)


def _random_graph(rng, n_lo=3, n_hi=9):
    n = int(rng.integers(n_lo, n_hi))
    return erdos_renyi(n, 0.5, seed=int(rng.integers(2**31)))


def _random_quadratic_network(rng, graph, p=2):
    centers = rng.standard_normal((graph.n_nodes, p))
    weights = rng.uniform(0.5, 2.0, graph.n_nodes)
    return DistributedProblem([SquaredDistance(c, w) for c, w in zip(centers, weights)], dim=p)


def _valid_steps(rng, L, d_min=1):
    """Random ``(tau, rho)`` with ``1/tau - 1/rho`` between 1.05 and 3 times ``L / (2 d_min)``."""
    L = max(L / d_min, 1e-12)
    rho = rng.uniform(0.5, 5.0) / L
    gap = 0.5 * L * rng.uniform(1.05, 3.0)
    return StepSizes(1.0 / (gap + 1.0 / rho), rho)


def check_moreau(rng, cases):
    worst = 0.0
    for _ in range(cases):
        x = rng.standard_normal(6) * 3
        gamma = rng.uniform(0.1, 3.0)
        # prox of the conjugate of ||.||_1 is the projection onto the unit box
        lhs = prox_l1(gamma, x) + gamma * np.clip(x / gamma, -1, 1)
        worst = max(worst, float(np.abs(lhs - x).max()))
    return worst <= 1e-12, f"max Moreau residual {worst:.3g}"


def check_edge_gram(rng, cases):
    for _ in range(cases):
        g = _random_graph(rng)
        x = rng.integers(-50, 50, size=(g.n_nodes, 3)).astype(float)
        if not np.array_equal(edge_op_adjoint(g, edge_op_apply(g, x)), g.degrees[:, None] * x):
            return False, f"M*M differs from the degree matrix on {g}"
    return True, "M*M x = d_n x_n exactly"


def check_averagedness(rng, cases):
    worst = -np.inf
    for _ in range(cases):
        g = _random_graph(rng)
        prob = _random_quadratic_network(rng, g)
        lifted = prob.lifted(g)
        steps = _valid_steps(rng, lifted.lipschitz)
        op = vu_condat_operator(lift_problem(lifted), steps, lifted.M.out_shape)
        for _ in range(20):
            x, y = rng.standard_normal(op.dim) * 3, rng.standard_normal(op.dim) * 3
            worst = max(worst, averagedness_gap(op, x, y) / max(1.0, op.sqnorm(x - y)))
    return worst <= 1e-9, f"largest normalized violation {worst:.3g}"


def check_expected_descent(rng, cases):
    worst_id, worst_slack = 0.0, np.inf
    for _ in range(cases):
        J = int(rng.integers(2, 5))
        Q = 0.9 * np.linalg.qr(rng.standard_normal((J, J)))[0]
        alpha = rng.uniform(0.3, 0.95)
        b = rng.standard_normal(J)
        T = lambda v, Q=Q, a=alpha, b=b: (1 - a) * v + a * (Q @ v + b)
        op = FixedPointOperator(T, [1] * J, alpha)
        xstar = np.linalg.solve(np.eye(J) - Q, b)
        sel = CoordinateSelector.uniform_single(J)
        eta = rng.uniform(0.1, 0.99) / alpha
        res = expected_descent_check(op, sel, eta, rng.standard_normal(J), xstar)
        worst_id = max(worst_id, res.identity_gap / max(1.0, abs(res.lhs)))
        worst_slack = min(worst_slack, res.slack)
    ok = worst_id <= 1e-12 and worst_slack >= -1e-10
    return ok, f"identity gap {worst_id:.3g}, min slack {worst_slack:.3g}"


def check_dadmm_equivalence(rng, cases):
    worst = 0.0
    for _ in range(cases):
        g = _random_graph(rng)
        prob = _random_quadratic_network(rng, g)
        lifted = prob.lifted(g)
        steps = _valid_steps(rng, lifted.lipschitz)
        net = initial_network_state(prob, g, rng.standard_normal((g.n_nodes, prob.dim)))
        cen = initial_state(lifted, net.X)
        for _ in range(30):
            net = dadmm_plus_round(prob, g, steps, net)
            cen = admm_plus_step(lifted, steps, cen)
            worst = max(worst, float(np.abs(net.X - cen.x).max()))
    return worst <= 1e-10, f"max DADMM+/ADMM+ gap {worst:.3g}"


def check_dapd_blocks(rng, cases):
    for _ in range(cases):
        g = _random_graph(rng)
        prob = _random_quadratic_network(rng, g)
        steps = _valid_steps(rng, prob.lipschitz, g.d_min)
        op = dapd_operator(prob, g, steps)
        state = initial_network_state(prob, g, rng.standard_normal((g.n_nodes, prob.dim)),
                                      rng.standard_normal((2 * g.n_edges, prob.dim)))
        full = dapd_round(prob, g, steps, state, range(g.n_nodes))
        if np.abs(pack_agent_blocks(g, full.X, full.Lam) - op.apply(pack_agent_blocks(g, state.X, state.Lam))).max() > 1e-12:
            return False, "full-activation DAPD differs from the agent-block operator"
    return True, "full-activation DAPD equals the agent-block operator"


def check_libsvm(rng, cases):
    for _ in range(cases):
        m, p = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        A = rng.standard_normal((m, p)) * (rng.random((m, p)) < 0.6)
        A[:, -1] += 1.0  # keep p as the largest index
        ds = SparseDataset(A, rng.choice([-1.0, 1.0], m))
        if not parse_libsvm(format_libsvm(ds)).same_as(ds):
            return False, "LIBSVM round trip changed the dataset"
        Z = standardize(A)
        if m > 1 and np.abs(standardize(Z) - Z).max() > 1e-12:
            return False, "standardization is not idempotent"
    return True, "round trip exact, standardization idempotent"


CHECKS = [
    ("moreau identity", check_moreau),
    ("edge gram operator", check_edge_gram),
    ("primal-dual averagedness", check_averagedness),
    ("expected descent", check_expected_descent),
    ("DADMM+ = ADMM+", check_dadmm_equivalence),
    ("DAPD agent blocks", check_dapd_blocks),
    ("LIBSVM round trip", check_libsvm),
]


def run_audit(seed=0, cases=20):
    """Return ``[(name, passed, detail)]`` for every check."""
    out = []
    for name, check in CHECKS:
        rng = np.random.default_rng([seed, len(out)])
        try:
            ok, detail = check(rng, cases)
        except Exception as exc:  # report, do not abort the audit
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
