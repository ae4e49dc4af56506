import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from oracles import finite_difference_grad, grid_argmin_1d
from pdcoord.functions import (EdgeConsensus, IndicatorBox, IndicatorHyperplane, IndicatorPoint, L1Norm, LogisticLoss,
                               Quadratic, RowSeparable, SquaredDistance, SquaredNorm, ZeroFunction,
                               lipschitz_estimate, logistic_value_grad, moreau_prox_conjugate,
                               prox_l1, prox_pair_consensus, prox_quadratic)

finite = st.floats(-1e3, 1e3, allow_nan=False)
gammas = st.floats(1e-3, 1e2)


def test_soft_threshold_examples():
    np.testing.assert_array_equal(prox_l1(1.0, np.array([2.0, -0.5, 0.0])), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(prox_l1(0.1, np.zeros(3)), np.zeros(3))


def test_soft_threshold_matches_grid_oracle():
    w = grid_argmin_1d(lambda w: np.abs(w) + (w - 0.7) ** 2 / 0.6, -2, 2)
    assert prox_l1(0.3, np.array([0.7]))[0] == pytest.approx(0.4, abs=1e-12)
    assert w == pytest.approx(0.4, abs=1e-6)


def test_prox_l1_rejects_bad_input():
    with pytest.raises(ValueError):
        prox_l1(1.0, np.array([np.nan]))
    with pytest.raises(ValueError):
        prox_l1(0.0, np.array([1.0]))
    with pytest.raises(ValueError):
        prox_l1(1.0, np.array([np.inf]))


def test_prox_quadratic_examples():
    x = np.array([1.5, -2.0])
    np.testing.assert_array_equal(prox_quadratic(0.0, 1.0, x), x)
    assert prox_quadratic(1.0, 1.0, np.array([2.0]))[0] == 1.0
    oracle = grid_argmin_1d(lambda w: 1.5 * w ** 2 + (w - 5) ** 2 / 1.0, -10, 10)
    assert prox_quadratic(3.0, 0.5, np.array([5.0]))[0] == pytest.approx(2.0, abs=1e-12)
    assert oracle == pytest.approx(2.0, abs=1e-6)


def test_pair_consensus_examples():
    a, b = prox_pair_consensus(1.0, (np.array([1.0]), np.array([3.0])))
    assert a[0] == b[0] == 2.0
    a, b = prox_pair_consensus(1.0, (np.array([4.2]), np.array([4.2])))
    assert a[0] == b[0] == 4.2
    y = (np.array([0.3, -1.0]), np.array([2.0, 5.0]))
    for u, v in zip(prox_pair_consensus(7.0, y), prox_pair_consensus(0.1, y)):
        np.testing.assert_array_equal(u, v)
    with pytest.raises(ValueError):
        prox_pair_consensus(1.0, (np.zeros(2), np.zeros(3)))


def test_moreau_conjugate_examples():
    y = np.array([[1.0], [3.0]])
    out = moreau_prox_conjugate(EdgeConsensus(), 1.0, y)
    np.testing.assert_allclose(out, [[-1.0], [1.0]], atol=1e-15)
    # direct projection onto the antidiagonal {(a, -a)}
    d = (y[0] - y[1]) / 2
    np.testing.assert_allclose(out, np.vstack([d, -d]), atol=1e-15)
    x = np.array([3.0, -2.0])
    np.testing.assert_allclose(moreau_prox_conjugate(ZeroFunction(), 0.7, x), np.zeros(2), atol=1e-15)


PROXABLE = [
    L1Norm(1.3), SquaredNorm(2.0), SquaredDistance(np.array([1.0, -2.0, 0.5]), 0.7),
    IndicatorBox(-np.ones(3), 2 * np.ones(3)), IndicatorHyperplane(np.array([1.0, -2.0, 0.5]), 0.7),
    Quadratic(np.diag([1.0, 2.0, 3.0]) + 0.5, np.array([1.0, 0.0, -1.0])),
    ZeroFunction(),
]


@pytest.mark.parametrize("term", PROXABLE, ids=lambda t: type(t).__name__)
def test_moreau_identity_for_catalog(term):
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = rng.standard_normal(3) * 3
        rho = rng.uniform(0.05, 5)
        lhs = moreau_prox_conjugate(term, rho, x) + term.prox(rho, rho * x) / rho
        np.testing.assert_allclose(lhs, x, atol=1e-12 * max(1.0, np.abs(x).max()))


@pytest.mark.parametrize("term", PROXABLE, ids=lambda t: type(t).__name__)
def test_prox_optimality_by_perturbation(term):
    rng = np.random.default_rng(1)
    for _ in range(1000):
        x = rng.standard_normal(3) * 3
        gamma = rng.uniform(0.05, 5)
        p = term.prox(gamma, x)
        obj = lambda w: term.value(w) + np.sum((w - x) ** 2) / (2 * gamma)
        base = obj(p)
        delta = rng.standard_normal(3) * 10 ** rng.uniform(-6, 0)
        w = p + delta
        assert obj(w) >= base - 1e-9 * max(1.0, abs(base))


@pytest.mark.parametrize("term", PROXABLE, ids=lambda t: type(t).__name__)
def test_prox_firmly_nonexpansive(term):
    rng = np.random.default_rng(2)
    for _ in range(1000):
        x, y = rng.standard_normal((2, 3)) * 3
        gamma = rng.uniform(0.05, 5)
        px, py = term.prox(gamma, x), term.prox(gamma, y)
        assert np.sum((px - py) ** 2) <= np.dot(px - py, x - y) + 1e-9


def test_indicator_prox_ignores_step():
    box = IndicatorBox(-np.ones(2), np.ones(2))
    x = np.array([3.0, -0.2])
    np.testing.assert_array_equal(box.prox(0.01, x), box.prox(100.0, x))
    pt = IndicatorPoint(np.array([1.0, 2.0]))
    np.testing.assert_array_equal(pt.prox(5.0, x), [1.0, 2.0])
    assert pt.value(np.array([1.0, 2.0])) == 0.0 and pt.value(x) == np.inf


@given(st.lists(finite, min_size=1, max_size=6), gammas)
def test_soft_threshold_property(xs, gamma):
    x = np.array(xs)
    p = prox_l1(gamma, x)
    np.testing.assert_allclose(p, np.sign(x) * np.maximum(np.abs(x) - gamma, 0), rtol=0, atol=0)


@given(st.lists(finite, min_size=2, max_size=8).filter(lambda v: len(v) % 2 == 0), gammas)
def test_edge_consensus_projection_property(vals, gamma):
    y = np.array(vals).reshape(-1, 1)
    p = EdgeConsensus().prox(gamma, y)
    assert np.array_equal(p[0::2], p[1::2])
    np.testing.assert_allclose(EdgeConsensus().prox(gamma, p), p, rtol=0, atol=0)


SMOOTH = [
    SquaredNorm(2.0), SquaredDistance(np.array([1.0, -2.0, 0.5]), 0.7),
    Quadratic(np.array([[2.0, 0.5, 0], [0.5, 1.0, 0.2], [0, 0.2, 3.0]]), np.array([1.0, 0.0, -1.0])),
    LogisticLoss(np.random.default_rng(3).standard_normal((20, 3)), np.where(np.arange(20) % 3, 1.0, -1.0)),
    SquaredNorm(0.5) + SquaredDistance(np.ones(3)),
]


@pytest.mark.parametrize("term", SMOOTH, ids=lambda t: type(t).__name__)
def test_gradient_finite_differences(term):
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.standard_normal(3)
        fd = finite_difference_grad(term.value, x)
        g = term.grad(x)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(g))


@pytest.mark.parametrize("term", SMOOTH, ids=lambda t: type(t).__name__)
def test_gradient_lipschitz_on_pairs(term):
    rng = np.random.default_rng(5)
    for _ in range(500):
        x, y = rng.standard_normal((2, 3)) * 2
        assert np.linalg.norm(term.grad(x) - term.grad(y)) <= term.lipschitz * np.linalg.norm(x - y) + 1e-12


def test_logistic_at_zero_is_log2():
    rng = np.random.default_rng(6)
    t = LogisticLoss(rng.standard_normal((7, 4)), rng.choice([-1.0, 1.0], 7))
    assert t.value(np.zeros(4)) == pytest.approx(np.log(2), abs=1e-15)


def test_logistic_limit_decreases_to_zero():
    t = LogisticLoss(np.array([[1.0]]), np.array([1.0]))
    vals = [t.value(np.array([s])) for s in (0.0, 1.0, 10.0, 100.0, 800.0, 1e6)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-12


def test_logistic_overflow_safe():
    t = LogisticLoss(np.array([[1.0], [1.0]]), np.array([1.0, -1.0]))
    with np.errstate(over="raise"):
        v, g = logistic_value_grad(t, np.array([1e4]))
    assert np.isfinite(v) and np.all(np.isfinite(g))
    assert v == pytest.approx(0.5 * 1e4, rel=1e-12)


def test_logistic_dimension_mismatch():
    t = LogisticLoss(np.ones((2, 3)), np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        t.value(np.zeros(2))


def test_logistic_sparse_matches_dense():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((15, 5)) * (rng.random((15, 5)) < 0.4)
    y = rng.choice([-1.0, 1.0], 15)
    dense, sp = LogisticLoss(A, y), LogisticLoss(sparse.csr_matrix(A), y)
    x = rng.standard_normal(5)
    assert dense.value(x) == pytest.approx(sp.value(x), rel=1e-14)
    np.testing.assert_allclose(dense.grad(x), sp.grad(x), rtol=1e-13, atol=1e-15)
    assert dense.lipschitz == sp.lipschitz


def test_lipschitz_estimate_examples():
    t = LogisticLoss(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([1.0, -1.0]))
    assert lipschitz_estimate(t) == 1.0
    assert t.lipschitz == lipschitz_estimate(t)
    assert lipschitz_estimate(LogisticLoss(np.zeros((3, 2)), np.ones(3))) == 0.0
    with pytest.raises(ValueError):
        lipschitz_estimate(LogisticLoss(np.zeros((0, 2)), np.zeros(0)))


def test_logistic_rejects_bad_labels():
    with pytest.raises(ValueError):
        LogisticLoss(np.ones((2, 1)), np.array([0.0, 1.0]))


def test_row_separable_per_row_steps():
    terms = RowSeparable([L1Norm(1.0), L1Norm(2.0)])
    x = np.array([[3.0, -3.0], [3.0, -3.0]])
    out = terms.prox(np.array([1.0, 0.5]), x)
    np.testing.assert_array_equal(out, [[2.0, -2.0], [2.0, -2.0]])
    assert terms.value(x) == 6.0 + 12.0


def test_row_separable_full_shape_steps():
    terms = RowSeparable([L1Norm(1.0), Quadratic(np.eye(2))])
    x = np.array([[3.0, -3.0], [2.0, 4.0]])
    gamma = np.array([[1.0, 2.0], [1.0, 1.0]])
    out = terms.prox(gamma, x)
    np.testing.assert_array_equal(out[0], [2.0, -1.0])
    np.testing.assert_allclose(out[1], [1.0, 2.0], atol=1e-15)
