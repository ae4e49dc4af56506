"""
Averaged operators and (randomized) Krasnosel'skii-Mann iterations.

The state space is a product of Euclidean blocks. Operators work on flat
float arrays; :class:`BlockVector` carries the layout at the API boundary.
A block-diagonal metric may be attached to an operator, in which case all
norms used by the engine (residuals, averagedness, the weighted norm of the
coordinate-descent analysis) are taken in that metric.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when an iterate becomes non-finite or exceeds the blow-up bound."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"iterate diverged at iteration {iteration}")


DIVERGENCE_BOUND = 1e12


class BlockVector:
    """A flat vector split into consecutive blocks of the given sizes."""

    def __init__(self, data, layout):
        data = np.array(data, dtype=float).ravel()
        layout = tuple(int(s) for s in layout)
        if any(s <= 0 for s in layout):
            raise ValueError("block sizes must be positive")
        if sum(layout) != data.size:
            raise ValueError(f"layout sums to {sum(layout)} but data has {data.size} entries")
        self.data = data
        self.layout = layout
        self._offsets = np.concatenate(([0], np.cumsum(layout)))

    @classmethod
    def from_blocks(cls, blocks):
        blocks = [np.atleast_1d(np.asarray(b, dtype=float)).ravel() for b in blocks]
        return cls(np.concatenate(blocks), [b.size for b in blocks])

    @property
    def n_blocks(self):
        return len(self.layout)

    def slice(self, j):
        if not 0 <= j < len(self.layout):
            raise IndexError(f"block index {j} out of range for {len(self.layout)} blocks")
        return slice(self._offsets[j], self._offsets[j + 1])

    def block(self, j):
        return self.data[self.slice(j)]

    @property
    def blocks(self):
        return [self.block(j) for j in range(self.n_blocks)]

    def copy(self):
        return BlockVector(self.data.copy(), self.layout)

    def __repr__(self):
        return f"BlockVector({self.blocks!r})"


def layout_slices(layout):
    offsets = np.concatenate(([0], np.cumsum(layout)))
    return [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]


class FixedPointOperator:
    """
    An alpha-averaged operator on a product of blocks.

    Parameters
    ----------
    apply : callable
        Maps a flat array to a flat array of the same size.
    layout : sequence of int
        Block sizes.
    alpha : float
        Averagedness constant in (0, 1].
    apply_block : callable, optional
        ``apply_block(j, x)`` returns block ``j`` of ``apply(x)``. Defaults to
        slicing the full output, which keeps both paths bit-identical.
    metric : sequence, optional
        One entry per block: ``None`` (Euclidean) or a symmetric positive
        definite matrix ``V_j``; the squared norm is ``sum_j x_j' V_j x_j``.
    """

    def __init__(self, apply, layout, alpha, apply_block=None, metric=None):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        self._apply = apply
        self.layout = tuple(int(s) for s in layout)
        self.slices = layout_slices(self.layout)
        self.alpha = float(alpha)
        self._apply_block = apply_block
        if metric is not None:
            metric = list(metric)
            if len(metric) != len(self.layout):
                raise ValueError("metric needs one entry per block")
            for V, s in zip(metric, self.layout):
                if V is not None and np.shape(V) != (s, s):
                    raise ValueError("metric block has the wrong shape")
            if all(V is None for V in metric):
                metric = None
        self.metric = metric

    @property
    def dim(self):
        return sum(self.layout)

    @property
    def n_blocks(self):
        return len(self.layout)

    def apply(self, x):
        return np.asarray(self._apply(x), dtype=float)

    def apply_block(self, j, x):
        if self._apply_block is None:
            return self.apply(x)[self.slices[j]]
        return np.asarray(self._apply_block(j, x), dtype=float)

    def block_sqnorm(self, j, v):
        if self.metric is None or self.metric[j] is None:
            return float(v @ v)
        return float(v @ self.metric[j] @ v)

    def sqnorm(self, v):
        if self.metric is None:
            return float(v @ v)
        return sum(self.block_sqnorm(j, v[s]) for j, s in enumerate(self.slices))

    def norm(self, v):
        return float(np.sqrt(self.sqnorm(v)))


def averagedness_gap(op, x, y):
    """
    ``||Tx - Ty||^2 - ||x - y||^2 + (1 - alpha)/alpha ||(I-T)x - (I-T)y||^2``.

    Nonpositive (up to rounding) for an alpha-averaged operator.
    """
    tx, ty = op.apply(x), op.apply(y)
    a = op.alpha
    return op.sqnorm(tx - ty) - op.sqnorm(x - y) + (1 - a) / a * op.sqnorm((x - tx) - (y - ty))


class CoordinateSelector:
    """
    A finite distribution over subsets of block indices.

    The support is stored explicitly as ``(subset, probability)`` pairs so
    that conditional expectations can be computed by enumeration. Every
    block must belong to some subset of positive probability.
    """

    def __init__(self, support, n_blocks):
        self.n_blocks = int(n_blocks)
        subsets, probs = [], []
        for subset, p in support:
            subset = tuple(sorted(set(int(j) for j in subset)))
            if any(not 0 <= j < self.n_blocks for j in subset):
                raise ValueError(f"subset {subset} references a block outside 0..{self.n_blocks - 1}")
            if p < 0:
                raise ValueError("probabilities must be nonnegative")
            subsets.append(subset)
            probs.append(float(p))
        probs = np.asarray(probs)
        if not subsets or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        self.subsets = subsets
        self.probs = probs
        covered = np.zeros(self.n_blocks, dtype=bool)
        for s, p in zip(subsets, probs):
            if p > 0:
                covered[list(s)] = True
        if not covered.all():
            missing = np.flatnonzero(~covered).tolist()
            raise ValueError(f"blocks {missing} are never selected with positive probability")
        self._uniform = np.all(probs == probs[0])
        self._cdf = np.cumsum(probs)

    @property
    def support(self):
        return list(zip(self.subsets, self.probs.tolist()))

    @classmethod
    def uniform_single(cls, n_blocks):
        return cls([((j,), 1.0 / n_blocks) for j in range(n_blocks)], n_blocks)

    @classmethod
    def full(cls, n_blocks):
        return cls([(tuple(range(n_blocks)), 1.0)], n_blocks)

    def sample_index(self, rng):
        if self._uniform:
            return int(rng.integers(len(self.subsets)))
        i = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return min(i, len(self.subsets) - 1)

    def sample(self, rng):
        return self.subsets[self.sample_index(rng)]

    def inclusion_probabilities(self):
        """``P(j in xi)`` for every block ``j``."""
        q_inv = np.zeros(self.n_blocks)
        for s, p in zip(self.subsets, self.probs):
            q_inv[list(s)] += p
        return q_inv


@dataclass
class RelaxationSchedule:
    """Relaxation parameters ``eta_k`` with declared bounds ``lo <= eta_k <= hi``."""

    eta: Callable[[int], float]
    lo: float
    hi: float

    @classmethod
    def constant(cls, eta):
        return cls(lambda k: eta, eta, eta)

    @classmethod
    def default(cls, alpha):
        eta = 1.0 if alpha < 0.9 else 0.9 / alpha
        return cls.constant(eta)

    def validate(self, alpha):
        if not 0 < self.lo <= self.hi < 1.0 / alpha:
            raise ValueError(
                f"relaxation bounds [{self.lo}, {self.hi}] must satisfy 0 < lo <= hi < 1/alpha = {1 / alpha}")
        return self

    def __call__(self, k):
        eta = self.eta(k)
        if not self.lo <= eta <= self.hi:
            raise ValueError(f"eta({k}) = {eta} leaves the declared bounds [{self.lo}, {self.hi}]")
        return eta


@dataclass
class StoppingRule:
    tol: float = 1e-9
    max_iter: int = 10**6
    check_every: int = 1


class KMTrace(NamedTuple):
    iterations: np.ndarray
    residuals: np.ndarray


def _guard(x, k):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_BOUND:
        raise DivergenceError(k)


def _as_flat(op, x0):
    if isinstance(x0, BlockVector):
        if x0.layout != op.layout:
            raise ValueError("initial point layout does not match the operator")
        return x0.data.copy()
    x = np.array(x0, dtype=float).ravel()
    if x.size != op.dim:
        raise ValueError("initial point has the wrong dimension")
    return x


def km_iterate(op, x0, schedule=None, stop=None):
    """
    Krasnosel'skii-Mann iterations ``x+ = x + eta_k (Tx - x)``.

    Parameters
    ----------
    op : FixedPointOperator
    x0 : BlockVector or array
    schedule : RelaxationSchedule, optional
        Defaults to :meth:`RelaxationSchedule.default`.
    stop : StoppingRule, optional
        The fixed-point residual ``||x - Tx||`` (operator metric) is checked
        before every update.

    Returns
    -------
    x : BlockVector
        Last iterate.
    trace : KMTrace
        Residual at each checked iteration.
    """
    schedule = (schedule or RelaxationSchedule.default(op.alpha)).validate(op.alpha)
    stop = stop or StoppingRule()
    x = _as_flat(op, x0)
    its, res = [], []
    for k in range(stop.max_iter + 1):
        tx = op.apply(x)
        r = op.norm(x - tx)
        its.append(k)
        res.append(r)
        if r <= stop.tol or k == stop.max_iter:
            break
        x = x + schedule(k) * (tx - x)
        _guard(x, k + 1)
    return BlockVector(x, op.layout), KMTrace(np.array(its), np.array(res))


def randomized_km_step(op, x, subset, eta):
    """One coordinate-descent KM step: blocks in ``subset`` move, the rest are copied."""
    if len(subset) == op.n_blocks:
        return x + eta * (op.apply(x) - x)
    out = x.copy()
    for j in subset:
        s = op.slices[j]
        out[s] = x[s] + eta * (op.apply_block(j, x) - x[s])
    return out


def randomized_km_iterate(op, x0, selector, seed, schedule=None, stop=None, rng=None):
    """
    Randomized coordinate-descent KM iterations.

    At step ``k`` a subset ``xi`` is drawn from ``selector`` and only the
    blocks in ``xi`` are updated, ``x_j+ = x_j + eta_k (T_j x - x_j)``. The
    generator is ``numpy.random.default_rng(seed)`` (PCG64), so trajectories
    are reproducible across platforms. The residual ``||x - Tx||`` costs a
    full operator evaluation and is checked every ``stop.check_every`` steps.
    """
    if selector.n_blocks != op.n_blocks:
        raise ValueError("selector and operator disagree on the number of blocks")
    schedule = (schedule or RelaxationSchedule.default(op.alpha)).validate(op.alpha)
    stop = stop or StoppingRule()
    rng = np.random.default_rng(seed) if rng is None else rng
    x = _as_flat(op, x0)
    its, res = [], []
    for k in range(stop.max_iter + 1):
        if k % stop.check_every == 0 or k == stop.max_iter:
            r = op.norm(x - op.apply(x))
            its.append(k)
            res.append(r)
            if r <= stop.tol or k == stop.max_iter:
                break
        x = randomized_km_step(op, x, selector.sample(rng), schedule(k))
        _guard(x, k + 1)
    return BlockVector(x, op.layout), KMTrace(np.array(its), np.array(res))


def _flat(x):
    return x.data if isinstance(x, BlockVector) else np.asarray(x, dtype=float).ravel()


def weighted_sqnorm(selector, x, op):
    if selector.n_blocks != op.n_blocks:
        raise ValueError("selector and operator disagree on the number of blocks")
    q = 1.0 / _positive_inclusion(selector)
    x = _flat(x)
    return sum(q[j] * op.block_sqnorm(j, x[s]) for j, s in enumerate(op.slices))


def _positive_inclusion(selector):
    q_inv = selector.inclusion_probabilities()
    if np.any(q_inv <= 0):
        raise ValueError("some block is never selected: weighted norm undefined")
    return q_inv


def weighted_norm(selector, x, op=None):
    """
    ``|||x||| = sqrt(sum_j q_j ||x_j||^2)`` with ``1/q_j = P(j in xi)``.

    ``x`` is a :class:`BlockVector`, or a flat array together with ``op``
    (whose layout and metric are then used).
    """
    if isinstance(x, BlockVector) and op is None:
        if x.n_blocks != selector.n_blocks:
            raise ValueError("selector and vector disagree on the number of blocks")
        q = 1.0 / _positive_inclusion(selector)
        return float(np.sqrt(sum(q[j] * float(b @ b) for j, b in enumerate(x.blocks))))
    if op is None:
        raise ValueError("a flat vector needs the operator to fix the block layout")
    return float(np.sqrt(weighted_sqnorm(selector, x, op)))


class DescentCheck(NamedTuple):
    lhs: float
    rhs: float
    identity_rhs: float

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def identity_gap(self):
        return abs(self.lhs - self.identity_rhs)


def expected_descent_check(op, selector, eta, x, xstar, fixed_tol=1e-9):
    """
    Exact one-step conditional expectation of the weighted distance to ``xstar``.

    Enumerates the selector's support to compute
    ``lhs = E |||x+ - x*|||^2`` for ``x+ = x + eta (T^(xi) x - x)`` and returns
    it together with the supermartingale bound
    ``rhs = |||x - x*|||^2 - eta (1 - alpha eta) ||(I - T)x||^2`` and the
    exact identity ``|||x - x*|||^2 + ||Ux - x*||^2 - ||x - x*||^2`` where
    ``U = (1 - eta) I + eta T``.
    """
    x, xstar = _flat(x).astype(float), _flat(xstar).astype(float)
    if op.norm(op.apply(xstar) - xstar) > fixed_tol:
        raise ValueError("xstar is not a fixed point of the operator")
    q = 1.0 / _positive_inclusion(selector)

    def wsq(v):
        return sum(q[j] * op.block_sqnorm(j, v[s]) for j, s in enumerate(op.slices))

    tx = op.apply(x)
    lhs = 0.0
    for subset, p in zip(selector.subsets, selector.probs):
        if p == 0:
            continue
        lhs += p * wsq(randomized_km_step(op, x, subset, eta) - xstar)
    base = wsq(x - xstar)
    ux = x + eta * (tx - x)
    identity_rhs = base + (op.sqnorm(ux - xstar) - op.sqnorm(x - xstar))
    rhs = base - eta * (1 - op.alpha * eta) * op.sqnorm(x - tx)
    return DescentCheck(float(lhs), float(rhs), float(identity_rhs))
