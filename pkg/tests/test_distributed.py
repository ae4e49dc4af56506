from dataclasses import astuple

import numpy as np
import pytest

from pdcoord.avgop import CoordinateSelector, DivergenceError, RelaxationSchedule, StoppingRule, randomized_km_iterate
from pdcoord.distributed import (ActivationProcess, DistributedProblem, NetworkState, SimNetwork, abg_round,
                                 check_network_steps, consensus_residual, dadmm_plus_round, dapd_operator,
                                 dapd_round, decaying_step, dgd_round, initial_network_state, is_antisymmetric,
                                 pack_agent_blocks, pwg_round, run_distributed, simulate, unpack_agent_blocks)
from pdcoord.functions import L1Norm, SquaredDistance
from pdcoord.graph import Graph, erdos_renyi, metropolis_weights, path, ring
from pdcoord.primal_dual import StepSizeError, StepSizes


def quadratic_network(centers, weights=None, g_terms=None):
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if C.shape[0] == 1:
        C = C.T
    w = np.ones(C.shape[0]) if weights is None else weights
    return DistributedProblem([SquaredDistance(c, wn) for c, wn in zip(C, w)], g_terms, dim=C.shape[1])


def random_instance(rng, n=None, p=2, l1=False):
    n = n or int(rng.integers(3, 8))
    g = erdos_renyi(n, 0.6, int(rng.integers(1 << 30)))
    w = rng.uniform(0.5, 2.0, n)
    gs = [L1Norm(0.1) for _ in range(n)] if l1 else None
    prob = quadratic_network(rng.standard_normal((n, p)), w, gs)
    bound = prob.lipschitz / (2 * g.d_min)
    rho = rng.uniform(0.5, 3.0)
    tau = 1.0 / (bound * rng.uniform(1.1, 3.0) + 1.0 / rho)
    return prob, g, StepSizes(tau, rho)


def antisymmetric_duals(rng, g, p):
    Lam = np.zeros((2 * g.n_edges, p))
    Lam[0::2] = rng.standard_normal((g.n_edges, p))
    Lam[1::2] = -Lam[0::2]
    return Lam


def test_network_step_guard():
    prob = quadratic_network([1.0, -1.0])
    g = path(2)
    assert 0 < check_network_steps(prob, g, StepSizes(1.0, 4.0)) < 1
    with pytest.raises(StepSizeError):
        check_network_steps(prob, g, StepSizes(1.0, 2.0))
    with pytest.raises(ValueError):
        check_network_steps(DistributedProblem([SquaredDistance(np.zeros(1))]), Graph(1, []), StepSizes(1.0, 4.0))


def test_two_node_dadmm_plus_reaches_mean():
    prob = quadratic_network([3.0, -1.0])
    g = path(2)
    s = initial_network_state(prob, g)
    for _ in range(500):
        s = dadmm_plus_round(prob, g, StepSizes(1.0, 4.0), s)
    np.testing.assert_allclose(s.X, [[1.0], [1.0]], atol=1e-10)
    assert s.grads == 1000 and s.k == 500


def test_dapd_kkt_point_is_fixed():
    prob = quadratic_network([1.0, -1.0])
    g = path(2)
    state = NetworkState(np.zeros((2, 1)), np.array([[1.0], [-1.0]]))
    for active in ([0], [1], [0, 1]):
        out = dapd_round(prob, g, StepSizes(1.0, 4.0), state, active)
        np.testing.assert_array_equal(out.X, state.X)
        np.testing.assert_array_equal(out.Lam, state.Lam)


def test_dadmm_plus_rejects_non_antisymmetric_duals():
    prob = quadratic_network([1.0, -1.0])
    g = path(2)
    with pytest.raises(ValueError):
        dadmm_plus_round(prob, g, StepSizes(1.0, 4.0), NetworkState(np.zeros((2, 1)), np.ones((2, 1))))


def test_dadmm_plus_preserves_antisymmetry():
    rng = np.random.default_rng(0)
    for _ in range(10):
        prob, g, steps = random_instance(rng, l1=True)
        s = initial_network_state(prob, g, rng.standard_normal((g.n_nodes, 2)), antisymmetric_duals(rng, g, 2))
        for _ in range(30):
            s = dadmm_plus_round(prob, g, steps, s)
            assert is_antisymmetric(s.Lam, g)


def test_full_activation_matches_operator():
    rng = np.random.default_rng(1)
    for _ in range(10):
        prob, g, steps = random_instance(rng, l1=True)
        X, Lam = rng.standard_normal((g.n_nodes, 2)), rng.standard_normal((2 * g.n_edges, 2))
        out = dapd_round(prob, g, steps, NetworkState(X, Lam), range(g.n_nodes))
        op = dapd_operator(prob, g, steps)
        X2, Lam2 = unpack_agent_blocks(g, op.apply(pack_agent_blocks(g, X, Lam)), 2)
        np.testing.assert_array_equal(out.X, X2)
        np.testing.assert_array_equal(out.Lam, Lam2)


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(2)
    g = ring(5)
    X, Lam = rng.standard_normal((5, 3)), rng.standard_normal((10, 3))
    X2, Lam2 = unpack_agent_blocks(g, pack_agent_blocks(g, X, Lam), 3)
    assert np.array_equal(X, X2) and np.array_equal(Lam, Lam2)


def test_single_agent_dapd_is_randomized_km():
    rng = np.random.default_rng(3)
    prob, g, steps = random_instance(rng, n=6, l1=True)
    op = dapd_operator(prob, g, steps)
    rounds = 200
    s, _ = randomized_km_iterate(op, np.zeros(sum(op.layout)), CoordinateSelector.uniform_single(6), seed=9,
                                 schedule=RelaxationSchedule.constant(1.0),
                                 stop=StoppingRule(tol=0.0, max_iter=rounds))
    state = initial_network_state(prob, g)
    draw = np.random.default_rng(9)
    act = ActivationProcess.uniform_single(6)
    for _ in range(rounds):
        state = dapd_round(prob, g, steps, state, act.sample(draw))
    X, Lam = unpack_agent_blocks(g, s.data, 2)
    np.testing.assert_allclose(state.X, X, rtol=0, atol=1e-14)
    np.testing.assert_allclose(state.Lam, Lam, rtol=0, atol=1e-14)


def test_inactive_agents_keep_values():
    rng = np.random.default_rng(4)
    prob, g, steps = random_instance(rng, n=5)
    s = NetworkState(rng.standard_normal((5, 2)), rng.standard_normal((2 * g.n_edges, 2)))
    out = dapd_round(prob, g, steps, s, [2])
    others = [n for n in range(5) if n != 2]
    np.testing.assert_array_equal(out.X[others], s.X[others])
    mask = np.ones(2 * g.n_edges, dtype=bool)
    mask[g.own_rows[2]] = False
    np.testing.assert_array_equal(out.Lam[mask], s.Lam[mask])
    empty = dapd_round(prob, g, steps, s, [])
    assert np.array_equal(empty.X, s.X) and empty.grads == 0 and empty.k == 1
    with pytest.raises(ValueError):
        dapd_round(prob, g, steps, s, [1, 1])
    with pytest.raises(ValueError):
        dapd_round(prob, g, steps, s, [7])


def test_simulator_matches_array_rounds():
    rng = np.random.default_rng(5)
    for _ in range(5):
        prob, g, steps = random_instance(rng, l1=True)
        X0 = rng.standard_normal((g.n_nodes, 2))
        Lam0 = antisymmetric_duals(rng, g, 2)
        net = simulate(prob, g, steps, "dadmm_plus", 25, X0=X0, Lam0=Lam0)
        s = NetworkState(X0.copy(), Lam0.copy())
        for _ in range(25):
            s = dadmm_plus_round(prob, g, steps, s)
        X, Lam = net.snapshot()
        np.testing.assert_allclose(X, s.X, rtol=0, atol=1e-13)
        np.testing.assert_allclose(Lam, s.Lam, rtol=0, atol=1e-13)

        Lam0 = rng.standard_normal((2 * g.n_edges, 2))
        acts = [list(np.flatnonzero(rng.random(g.n_nodes) < 0.4)) for _ in range(40)]
        net = simulate(prob, g, steps, "dapd", 40, acts, X0=X0, Lam0=Lam0)
        s = NetworkState(X0.copy(), Lam0.copy())
        for a in acts:
            s = dapd_round(prob, g, steps, s, a)
        X, Lam = net.snapshot()
        np.testing.assert_allclose(X, s.X, rtol=0, atol=1e-13)
        np.testing.assert_allclose(Lam, s.Lam, rtol=0, atol=1e-13)
        assert sum(a.grad_count for a in net.agents) == s.grads


def test_simulator_only_talks_to_neighbours():
    prob = quadratic_network([0.0, 1.0, 2.0])
    net = SimNetwork(prob, path(3), StepSizes(0.5, 4.0))
    with pytest.raises(ValueError):
        net.send(0, 2, np.zeros(1))
    with pytest.raises(ValueError):
        simulate(prob, path(3), StepSizes(0.5, 4.0), "gossip", 1)


def test_gossip_baselines():
    prob = quadratic_network([2.0, 4.0, 6.0])
    g = path(3)
    s = NetworkState(np.array([[1.0], [5.0], [9.0]]), np.zeros((4, 1)))
    out = pwg_round(prob, g, 0.5, s, 0, 1)
    # steps give 1.5 and 4.5; both keep the mean
    np.testing.assert_array_equal(out.X[:2], [[3.0], [3.0]])
    assert out.grads == 2 and out.X[2, 0] == 9.0
    with pytest.raises(ValueError):
        pwg_round(prob, g, 0.5, s, 0, 2)
    out = abg_round(prob, g, 0.5, s, 1)
    # neighbours average with x_1 = 5 and then step toward their centers
    np.testing.assert_array_equal(out.X[:, 0], [0.5 * 3.0 + 0.5 * 2.0, 5.0, 0.5 * 7.0 + 0.5 * 6.0])
    assert out.grads == 2
    W = metropolis_weights(g)
    out = dgd_round(prob, W, 1.0, s)
    np.testing.assert_allclose(out.X[:, 0], W @ [2.0, 4.0, 6.0])
    with pytest.raises(ValueError):
        dgd_round(prob, 2 * W, 1.0, s)


def test_gossip_rejects_nonsmooth_terms():
    prob = quadratic_network([0.0, 1.0], g_terms=[L1Norm(1.0), L1Norm(1.0)])
    with pytest.raises(ValueError):
        pwg_round(prob, path(2), 0.1, initial_network_state(prob, path(2)), 0, 1)


def test_consensus_residual_examples():
    assert consensus_residual(np.ones((4, 2))) == 0.0
    assert consensus_residual(np.array([0.0, 2.0])) == 1.0
    assert consensus_residual(np.array([[0.0, 0.0], [3.0, 4.0]])) == 2.5


def test_decaying_step():
    assert decaying_step(2.0, 1) == 2.0
    assert decaying_step(1.0, 16) == pytest.approx(0.125)


def test_bernoulli_activation():
    act = ActivationProcess.bernoulli(3, 0.5)
    assert len(act.selector.subsets) == 8
    with pytest.raises(ValueError):
        ActivationProcess.bernoulli(3, 0.0)
    with pytest.raises(ValueError):
        ActivationProcess.bernoulli(20, 0.5)


#%% runner

def ring_problem(n=6, seed=0):
    rng = np.random.default_rng(seed)
    return quadratic_network(rng.standard_normal(n)), ring(n)


def test_run_budget_zero_records_initial_point_only():
    prob, g = ring_problem()
    tr = run_distributed("dapd", prob, g, StepSizes(1.0, 4.0), budget=0)
    assert len(tr) == 1 and tr.records[0].k == 0 and tr.records[0].grads == 0


def test_run_is_deterministic_and_budget_extends_trajectory():
    prob, g = ring_problem()
    for alg, params in (("dapd", StepSizes(1.0, 4.0)), ("pwg", 0.5), ("abg", 0.5)):
        a = run_distributed(alg, prob, g, params, seed=4, budget=300)
        b = run_distributed(alg, prob, g, params, seed=4, budget=300)
        assert [astuple(r) for r in a] == [astuple(r) for r in b]
        long = run_distributed(alg, prob, g, params, seed=4, budget=600)
        prefix = [astuple(r) for r in long][:len(a) - 1]
        assert prefix == [astuple(r) for r in a][:-1]
        assert long.best_until(300) <= a.records[-1].objective or long.best_until(300) == a.best_objective


def test_run_respects_budget_and_counts():
    prob, g = ring_problem()
    tr = run_distributed("dadmm_plus", prob, g, StepSizes(1.0, 4.0), budget=60)
    assert tr.last.grads == 60 and tr.last.k == 10
    tr = run_distributed("dgd", prob, g, 0.3, budget=61)
    assert tr.last.grads == 66


def test_run_converges_on_ring():
    prob, g = ring_problem()
    mean = np.mean([f.center[0] for f in prob.f_terms])
    tr = run_distributed("dadmm_plus", prob, g, StepSizes(1.2, 3.0), budget=6 * 2000, evaluate_at="average")
    assert tr.last.consensus_residual < 1e-8
    assert tr.last.objective == pytest.approx(prob.objective(np.array([mean])), abs=1e-10)


def test_run_validation_errors():
    prob, g = ring_problem()
    with pytest.raises(ValueError, match="unknown algorithm"):
        run_distributed("sgd", prob, g, 0.1)
    with pytest.raises(StepSizeError):
        run_distributed("dapd", prob, g, StepSizes(10.0, 10.0))
    with pytest.raises(ValueError):
        run_distributed("abg", prob, g, 0.1, activation=ActivationProcess.everyone(6))
    with pytest.raises(ValueError):
        run_distributed("pwg", prob, g, -1.0)
    with pytest.raises(ValueError):
        run_distributed("dapd", prob, ring(5), StepSizes(1.0, 4.0))


def test_run_divergence_carries_partial_trace():
    prob, g = ring_problem()
    with pytest.raises(DivergenceError) as err:
        with np.errstate(over="ignore", invalid="ignore"):
            run_distributed("dgd", prob, g, 1e9, budget=10**5)
    assert len(err.value.trace) >= 1
