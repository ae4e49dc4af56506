"""
Smooth and proximable convex terms.

Every term works on numpy arrays of arbitrary shape. Smooth terms expose
``value``, ``grad`` and a ``lipschitz`` constant for the gradient; proximable
terms expose ``value`` and ``prox(gamma, x)``, the minimizer of

    term(w) + ||w - x||^2 / (2 gamma).

Separable terms accept an array ``gamma`` broadcastable against ``x``, which
is how scaled-metric steps such as ``prox_{tau g_n / d_n}`` are computed
blockwise.
"""

import numpy as np
from scipy import sparse


def _check_finite(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def _check_gamma(gamma):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0) or not np.all(np.isfinite(gamma)):
        raise ValueError("gamma must be positive and finite")
    return gamma


#%% closed-form proximity operators

def prox_l1(gamma, x):
    """Soft threshold: componentwise ``sign(x) * max(|x| - gamma, 0)``."""
    gamma = _check_gamma(gamma)
    x = _check_finite(x)
    return np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)


def prox_quadratic(mu, gamma, x):
    """Proximity operator of ``(mu/2) ||.||^2``, i.e. ``x / (1 + gamma mu)``."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    gamma = _check_gamma(gamma)
    x = _check_finite(x)
    return x / (1.0 + gamma * mu)


def prox_pair_consensus(gamma, y):
    """
    Projection of a pair ``(y_n, y_m)`` onto ``C2 = {(v, v)}``.

    Both components are replaced by their midpoint. ``gamma`` is accepted
    for interface uniformity and ignored: the prox of an indicator is the
    projection whatever the step.
    """
    a, b = (np.asarray(v, dtype=float) for v in y)
    if a.shape != b.shape:
        raise ValueError(f"pair components differ in shape: {a.shape} vs {b.shape}")
    mid = 0.5 * (a + b)
    return mid, mid.copy()


def moreau_prox_conjugate(term, rho, x):
    """
    Proximity operator of ``rho^{-1} h^*`` through Moreau's identity.

    Parameters
    ----------
    term : ProxableTerm
        The function ``h``; only its ``prox`` is used.
    rho : float
        Positive scaling.
    x : ndarray
        Point of evaluation.

    Returns
    -------
    ndarray
        ``x - prox_{rho h}(rho x) / rho``.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=float)
    return x - term.prox(rho, rho * x) / rho


#%% term templates

class SmoothTerm:
    """Convex differentiable term with ``lipschitz``-continuous gradient."""

    lipschitz = 0.0

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def __add__(self, other):
        return SmoothSum([self, other])


class ProxableTerm:
    """Convex lower semicontinuous term with a computable proximity operator."""

    separable = True

    def value(self, x):
        raise NotImplementedError

    def prox(self, gamma, x):
        raise NotImplementedError


class ZeroFunction(SmoothTerm, ProxableTerm):
    """The zero function; smooth with constant 0 and prox equal to identity."""

    lipschitz = 0.0
    is_zero = True

    def value(self, x):
        return 0.0

    def grad(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def prox(self, gamma, x):
        return np.array(x, dtype=float, copy=True)


def is_zero(term):
    return getattr(term, "is_zero", False)


class SmoothSum(SmoothTerm):
    """Sum of smooth terms; Lipschitz constants add up."""

    def __init__(self, terms):
        flat = []
        for t in terms:
            flat.extend(t.terms if isinstance(t, SmoothSum) else [t])
        self.terms = flat
        self.lipschitz = float(sum(t.lipschitz for t in flat))

    def value(self, x):
        return sum(t.value(x) for t in self.terms)

    def grad(self, x):
        g = self.terms[0].grad(x)
        for t in self.terms[1:]:
            g = g + t.grad(x)
        return g


class L1Norm(ProxableTerm):
    """``weight * ||x||_1``; weight may be an array for weighted l1."""

    def __init__(self, weight=1.0):
        self.weight = np.asarray(weight, dtype=float)
        if np.any(self.weight < 0):
            raise ValueError("l1 weight must be nonnegative")

    def value(self, x):
        return float(np.sum(self.weight * np.abs(x)))

    def prox(self, gamma, x):
        x = _check_finite(x)
        t = _check_gamma(gamma) * self.weight
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


class SquaredNorm(SmoothTerm, ProxableTerm):
    """``(mu/2) ||x||^2``."""

    def __init__(self, mu):
        if mu < 0:
            raise ValueError("mu must be nonnegative")
        self.mu = float(mu)
        self.lipschitz = self.mu

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.mu * float(np.vdot(x, x))

    def grad(self, x):
        return self.mu * np.asarray(x, dtype=float)

    def prox(self, gamma, x):
        return prox_quadratic(self.mu, gamma, x)


class SquaredDistance(SmoothTerm, ProxableTerm):
    """``(weight/2) ||x - center||^2``."""

    def __init__(self, center, weight=1.0):
        self.center = np.asarray(center, dtype=float)
        self.weight = float(weight)
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")
        self.lipschitz = self.weight

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.center
        return 0.5 * self.weight * float(np.vdot(r, r))

    def grad(self, x):
        return self.weight * (np.asarray(x, dtype=float) - self.center)

    def prox(self, gamma, x):
        gamma = _check_gamma(gamma)
        x = _check_finite(x)
        return (x + gamma * self.weight * self.center) / (1.0 + gamma * self.weight)


class Quadratic(SmoothTerm, ProxableTerm):
    """``0.5 x'Qx - b'x + c`` on flat vectors, ``Q`` symmetric positive semidefinite."""

    separable = False

    def __init__(self, Q, b=None, c=0.0):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be a square matrix")
        if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        self.Q = 0.5 * (Q + Q.T)
        self.b = np.zeros(Q.shape[0]) if b is None else np.asarray(b, dtype=float)
        self.c = float(c)
        eig = np.linalg.eigvalsh(self.Q)
        if eig[0] < -1e-10 * max(1.0, eig[-1]):
            raise ValueError("Q must be positive semidefinite")
        self.lipschitz = float(max(eig[-1], 0.0))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.Q @ x) - float(self.b @ x) + self.c

    def grad(self, x):
        return self.Q @ np.asarray(x, dtype=float) - self.b

    def prox(self, gamma, x):
        if np.ndim(gamma) != 0:
            raise ValueError("Quadratic.prox needs a scalar step")
        gamma = float(_check_gamma(gamma))
        x = _check_finite(x)
        n = self.Q.shape[0]
        return np.linalg.solve(np.eye(n) + gamma * self.Q, x + gamma * self.b)


class IndicatorPoint(ProxableTerm):
    """Indicator of the singleton ``{point}``."""

    def __init__(self, point):
        self.point = np.asarray(point, dtype=float)

    def value(self, x):
        return 0.0 if np.array_equal(np.asarray(x, dtype=float), self.point) else np.inf

    def prox(self, gamma, x):
        _check_gamma(gamma)
        return np.broadcast_to(self.point, np.shape(x)).copy()


class IndicatorBox(ProxableTerm):
    """Indicator of the box ``[lo, hi]`` (componentwise)."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if np.any(self.lo > self.hi):
            raise ValueError("empty box")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.0 if np.all((x >= self.lo) & (x <= self.hi)) else np.inf

    def prox(self, gamma, x):
        _check_gamma(gamma)
        return np.clip(_check_finite(x), self.lo, self.hi)


class IndicatorHyperplane(ProxableTerm):
    """Indicator of ``{y : <normal, y> = offset}``."""

    separable = False

    def __init__(self, normal, offset, tol=1e-9):
        self.normal = np.asarray(normal, dtype=float)
        self.offset = float(offset)
        self.tol = float(tol)
        self._nn = float(np.vdot(self.normal, self.normal))
        if self._nn == 0.0:
            raise ValueError("hyperplane normal must be nonzero")

    def value(self, x):
        r = float(np.vdot(self.normal, x)) - self.offset
        return 0.0 if abs(r) <= self.tol * max(1.0, abs(self.offset)) else np.inf

    def prox(self, gamma, x):
        _check_gamma(gamma)
        x = _check_finite(x)
        return x - ((float(np.vdot(self.normal, x)) - self.offset) / self._nn) * self.normal


class EdgeConsensus(ProxableTerm):
    """
    ``sum_e iota_{C2}(y_e)`` on an edge-indexed array.

    Rows ``2e`` and ``2e + 1`` of ``y`` hold the two endpoint copies of edge
    ``e``; the prox averages each pair (independently of the step).
    """

    separable = False

    def __init__(self, tol=0.0):
        self.tol = tol

    def value(self, y):
        y = np.asarray(y, dtype=float)
        gap = np.abs(y[0::2] - y[1::2])
        return 0.0 if gap.size == 0 or gap.max() <= self.tol else np.inf

    def prox(self, gamma, y):
        y = np.asarray(y, dtype=float)
        if y.shape[0] % 2:
            raise ValueError("edge array must have an even number of rows")
        out = np.empty_like(y)
        mid = 0.5 * (y[0::2] + y[1::2])
        out[0::2] = mid
        out[1::2] = mid
        return out


class RowSeparable(SmoothTerm, ProxableTerm):
    """
    ``sum_n term_n(x[n])`` for an array whose leading axis indexes blocks.

    Used for the node-separable ``f`` and ``g`` of a networked problem. A
    ``gamma`` array with one entry per row (shape ``(N, 1)`` or ``(N,)``)
    gives each block its own step.
    """

    def __init__(self, terms):
        self.terms = list(terms)
        lips = [getattr(t, "lipschitz", 0.0) for t in self.terms]
        self.lipschitz = float(max(lips)) if lips else 0.0
        self.is_zero = all(is_zero(t) for t in self.terms)

    def value(self, x):
        return float(sum(t.value(xi) for t, xi in zip(self.terms, x)))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([t.grad(xi) for t, xi in zip(self.terms, x)])

    def prox(self, gamma, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return x.copy()
        gamma = np.asarray(gamma, dtype=float)
        if gamma.ndim and gamma.shape != x.shape:
            gamma = gamma.reshape(-1, *([1] * (x.ndim - 1)))
        g = np.broadcast_to(gamma, x.shape)
        out = []
        for t, gi, xi in zip(self.terms, g, x):
            # a row with one common step goes through as a scalar, which non-separable terms need
            flat = np.ravel(gi)
            out.append(t.prox(flat[0] if np.all(flat == flat[0]) else gi, xi))
        return np.stack(out)


#%% logistic loss

class LogisticLoss(SmoothTerm):
    """
    ``scale * sum_t log(1 + exp(-y_t a_t'x))``.

    Parameters
    ----------
    features : ndarray or scipy.sparse matrix, shape (m, p)
        Rows ``a_t``.
    labels : ndarray, shape (m,)
        Entries in {-1, +1}.
    scale : float, optional
        Defaults to ``1/m``. When the term holds a slice of a larger dataset
        pass ``1/m_total``; the Lipschitz estimate stays valid as long as
        ``scale * rows <= 1``.
    """

    def __init__(self, features, labels, scale=None):
        if sparse.issparse(features):
            features = sparse.csr_matrix(features, dtype=float)
        else:
            features = np.asarray(features, dtype=float)
            if features.ndim != 2:
                raise ValueError("features must be a 2-D array")
        labels = np.asarray(labels, dtype=float).ravel()
        if features.shape[0] != labels.shape[0]:
            raise ValueError("features and labels disagree on the number of rows")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        self.features = features
        self.labels = labels
        self.scale = (1.0 / max(labels.shape[0], 1)) if scale is None else float(scale)
        self.lipschitz = lipschitz_estimate(self) if labels.shape[0] else 0.0

    @property
    def dim(self):
        return self.features.shape[1]

    def value(self, x):
        return logistic_value_grad(self, x)[0]

    def grad(self, x):
        return logistic_value_grad(self, x, value=False)[1]


def _log1pexp(t):
    # log(1 + e^t) without overflow
    return np.log1p(np.exp(-np.abs(t))) + np.maximum(t, 0.0)


def _sigmoid(t):
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logistic_value_grad(term, x, value=True):
    """
    Value and gradient of a logistic loss.

    Returns ``(value, grad)``; with ``value=False`` the first entry is None
    and the log terms are skipped.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (term.dim,):
        raise ValueError(f"expected a vector of length {term.dim}, got shape {x.shape}")
    margin = term.labels * (term.features @ x)
    weights = -term.scale * term.labels * _sigmoid(-margin)
    g = term.features.T @ weights
    v = term.scale * float(np.sum(_log1pexp(-margin))) if value else None
    return v, np.asarray(g).ravel()


def lipschitz_estimate(term):
    """Upper bound ``0.25 * max_t ||a_t||^2`` on the gradient's Lipschitz constant."""
    A = term.features
    if A.shape[0] == 0:
        raise ValueError("empty dataset")
    if sparse.issparse(A):
        sq = np.asarray(A.multiply(A).sum(axis=1)).ravel()
    else:
        sq = np.einsum("ij,ij->i", A, A)
    return 0.25 * float(sq.max())
