"""
Centralized primal-dual solvers for ``min f(x) + g(x) + h(Mx)``.

ADMM+ is implemented directly from its four-line recursion; the
Vu-Condat iteration acts on the lifted variable ``y = Mx``. ADMM and
forward-backward are the ``f = 0`` and ``h = 0`` special cases and are kept
as separate routines so that the equivalences can be checked.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .avgop import DIVERGENCE_BOUND, DivergenceError, FixedPointOperator
from .functions import ZeroFunction, is_zero, moreau_prox_conjugate
from .trace import Trace


class StepSizeError(ValueError):
    """Step sizes violate the convergence condition; ``margin`` is the shortfall."""

    def __init__(self, message, margin):
        self.margin = margin
        super().__init__(message)


class XStepError(ValueError):
    pass


class LinearOperator:
    """
    Linear map ``M`` with its adjoint and a way to solve ``(M*M) w = v``.

    Either ``gram_diag`` (elementwise diagonal of ``M*M``, shaped like an
    input) or ``gram_inverse_apply`` must be given for ADMM+'s x-step.
    """

    def __init__(self, apply, adjoint, gram_inverse_apply=None, gram_diag=None,
                 injective=True, in_shape=None, out_shape=None, min_gram_eig=None):
        self.apply = apply
        self.adjoint = adjoint
        self.gram_diag = None if gram_diag is None else np.asarray(gram_diag, dtype=float)
        if gram_inverse_apply is None and self.gram_diag is not None and injective:
            d = self.gram_diag
            gram_inverse_apply = lambda v: np.asarray(v, dtype=float) / d
        self.gram_inverse_apply = gram_inverse_apply
        self.injective = bool(injective)
        self.in_shape = in_shape
        self.out_shape = out_shape
        if min_gram_eig is None and self.gram_diag is not None:
            min_gram_eig = float(self.gram_diag.min())
        self.min_gram_eig = min_gram_eig

    def inverse_on_range(self, y):
        """``M^{-1} y = (M*M)^{-1} M* y`` for ``y`` in the range of ``M``."""
        if not self.injective:
            raise ValueError("M is not injective")
        return self.gram_inverse_apply(self.adjoint(y))

    @classmethod
    def identity(cls, shape):
        shape = tuple(np.atleast_1d(shape))
        return cls(lambda x: np.array(x, dtype=float), lambda y: np.array(y, dtype=float),
                   gram_diag=np.ones(shape), in_shape=shape, out_shape=shape)

    @classmethod
    def diagonal(cls, d):
        d = np.asarray(d, dtype=float)
        return cls(lambda x: d * x, lambda y: d * y, gram_diag=d * d,
                   injective=bool(np.all(d != 0)), in_shape=d.shape, out_shape=d.shape)

    @classmethod
    def matrix(cls, A):
        """Dense matrix; ``M*M`` is used through a Cholesky factorization when injective."""
        A = np.asarray(A, dtype=float)
        G = A.T @ A
        eig = np.linalg.eigvalsh(G)
        injective = eig[0] > 1e-12 * max(eig[-1], 1.0)
        gram_inverse = None
        if injective:
            from scipy.linalg import cho_factor, cho_solve
            fac = cho_factor(G)
            gram_inverse = lambda v: cho_solve(fac, v)
        diag = np.diag(G).copy() if np.allclose(G, np.diag(np.diag(G)), rtol=0, atol=0) else None
        return cls(lambda x: A @ x, lambda y: A.T @ y, gram_inverse_apply=gram_inverse,
                   gram_diag=diag, injective=injective, in_shape=(A.shape[1],),
                   out_shape=(A.shape[0],), min_gram_eig=float(eig[0]))


@dataclass
class CompositeProblem:
    """
    ``f(x) + g(x) + h(Mx)`` with ``f`` smooth, ``g`` and ``h`` proximable.

    ``lipschitz`` is the constant of ``grad(f o M^{-1})`` on the range of
    ``M``. When omitted it is bounded by ``f.lipschitz / lambda_min(M*M)``.
    """

    f: object
    g: object
    h: object
    M: LinearOperator
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if not is_zero(self.f) and not self.M.injective:
            raise ValueError("M must be injective when f is not identically zero")
        if self.lipschitz is None:
            if is_zero(self.f):
                self.lipschitz = 0.0
            elif self.M.min_gram_eig:
                self.lipschitz = self.f.lipschitz / self.M.min_gram_eig
            else:
                raise ValueError("cannot infer the lifted Lipschitz constant; pass lipschitz")
        if self.lipschitz < 0:
            raise ValueError("lipschitz must be nonnegative")

    @property
    def smooth_is_zero(self):
        return is_zero(self.f)

    def objective(self, x):
        return self.f.value(x) + self.g.value(x) + self.h.value(self.M.apply(x))


@dataclass
class StepSizes:
    tau: float
    rho: float


class ValidatedSteps(NamedTuple):
    tau: float
    rho: float
    alpha: float
    margin: float


def averagedness_constant(tau, rho, lipschitz):
    """``alpha = 1 / (2 - alpha1)`` with ``alpha1 = (L/2) / (1/tau - 1/rho)``."""
    gap = 1.0 / tau - 1.0 / rho
    a1 = 0.0 if lipschitz == 0 else (lipschitz / 2) / gap
    return 1.0 / (2.0 - a1)


def check_step_sizes(problem, steps):
    """
    Accept ``(tau, rho)`` iff ``1/tau - 1/rho > L/2``, or ``f = 0`` and
    ``1/tau - 1/rho >= 0``.

    Returns the validated steps with the averagedness constant of the
    underlying fixed-point operator; raises :class:`StepSizeError` otherwise.
    """
    tau, rho = float(steps.tau), float(steps.rho)
    if not (tau > 0 and rho > 0):
        raise StepSizeError("tau and rho must be positive", margin=-np.inf)
    L = problem.lipschitz
    zero_f = problem.smooth_is_zero
    gap = 1.0 / tau - 1.0 / rho
    margin = gap - L / 2
    if zero_f:
        if gap < 0:
            raise StepSizeError(f"f = 0 requires 1/tau - 1/rho >= 0; got {gap:.6g}", margin=gap)
    elif not margin > 0:
        raise StepSizeError(
            f"1/tau - 1/rho = {gap:.6g} must exceed L/2 = {L / 2:.6g} (margin {margin:.6g})", margin=margin)
    return ValidatedSteps(tau, rho, averagedness_constant(tau, rho, 0.0 if zero_f else L), margin)


@dataclass
class PrimalDualState:
    x: np.ndarray
    lam: np.ndarray
    z: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    k: int = 0

    def copy(self):
        return PrimalDualState(*(None if v is None else np.array(v, copy=True)
                                 for v in (self.x, self.lam, self.z, self.u)), k=self.k)


def initial_state(problem, x0=None, lam0=None):
    shape_x = problem.M.in_shape
    shape_y = problem.M.out_shape
    x = np.zeros(shape_x) if x0 is None else np.array(x0, dtype=float)
    lam = np.zeros(shape_y) if lam0 is None else np.array(lam0, dtype=float)
    return PrimalDualState(x, lam)


def _x_step(g, M, gamma, w, lin=None):
    """``argmin_x g(x) + <lin, x> + ||Mx - w||^2 / (2 gamma)``."""
    rhs = M.adjoint(w)
    if lin is not None:
        rhs = rhs - gamma * lin
    if M.gram_diag is not None:
        D = M.gram_diag
        if not getattr(g, "separable", True):
            if not np.all(D == D.flat[0]):
                raise XStepError("non-separable g needs M*M proportional to the identity")
            D = float(D.flat[0])
        return g.prox(gamma / D, rhs / D)
    if is_zero(g) and M.gram_inverse_apply is not None:
        return M.gram_inverse_apply(rhs)
    raise XStepError("x-subproblem not solvable: need diagonal M*M, or g = 0 with gram_inverse_apply")


def admm_plus_step(problem, steps, state):
    """
    One ADMM+ iteration.

    ``z+ = prox_{rho h}(Mx + rho lam)``, ``lam+ = lam + (Mx - z+)/rho``,
    ``u+ = (1 - tau/rho) Mx + (tau/rho) z+`` and
    ``x+ = argmin g(x) + <grad f(x), x> + ||Mx - u+ + tau lam+||^2 / (2 tau)``.
    """
    tau, rho = steps.tau, steps.rho
    x, lam = state.x, state.lam
    Mx = problem.M.apply(x)
    z = problem.h.prox(rho, Mx + rho * lam)
    lam1 = lam + (Mx - z) / rho
    u = (1 - tau / rho) * Mx + (tau / rho) * z
    grad = None if problem.smooth_is_zero else problem.f.grad(x)
    x1 = _x_step(problem.g, problem.M, tau, u - tau * lam1, grad)
    return PrimalDualState(x1, lam1, z, u, state.k + 1)


def admm_step(problem, rho, state):
    """Standard ADMM (``f = 0``): the z-, lambda- and x-updates with a single parameter."""
    if not problem.smooth_is_zero:
        raise ValueError("ADMM requires f = 0")
    x, lam = state.x, state.lam
    Mx = problem.M.apply(x)
    z = problem.h.prox(rho, Mx + rho * lam)
    lam1 = lam + (Mx - z) / rho
    x1 = _x_step(problem.g, problem.M, rho, z - rho * lam1)
    return PrimalDualState(x1, lam1, z, z, state.k + 1)


def forward_backward_step(f, g, tau, x):
    """``prox_{tau g}(x - tau grad f(x))``; requires ``tau < 2/L``."""
    if not tau > 0 or f.lipschitz > 0 and not tau < 2.0 / f.lipschitz:
        raise StepSizeError(f"forward-backward needs 0 < tau < 2/L = {2.0 / f.lipschitz if f.lipschitz else np.inf:.6g}",
                            margin=(2.0 / f.lipschitz - tau) if f.lipschitz else tau)
    return g.prox(tau, x - tau * f.grad(x))


def primal_dual_residual(problem, steps, state, previous):
    """
    ``(||Mx - z||, ||x - x_prev|| / tau + rho ||lam - lam_prev||)``.

    The dual part is a surrogate for the distance of ``0`` to the optimality
    inclusions, which cannot be evaluated directly for nonsmooth terms.
    """
    primal = 0.0 if state.z is None else float(np.linalg.norm(problem.M.apply(state.x) - state.z))
    dual = (float(np.linalg.norm(state.x - previous.x)) / steps.tau
            + steps.rho * float(np.linalg.norm(state.lam - previous.lam)))
    return primal, dual


#%% Vu-Condat on the lifted variable

@dataclass
class SplitProblem:
    """``fbar(y) + gbar(y) + h(y)`` on a single space, ``grad fbar`` ``lipschitz``-continuous."""

    fbar: object
    gbar: object
    h: object
    lipschitz: float
    smooth_is_zero: Optional[bool] = None

    def __post_init__(self):
        if self.smooth_is_zero is None:
            self.smooth_is_zero = is_zero(self.fbar)


class LiftedSmooth:
    """``f o M^{-1}`` on the range of ``M``: gradient ``M (M*M)^{-1} grad f(M^{-1} y)``."""

    def __init__(self, f, M):
        self.f, self.M = f, M

    def value(self, y):
        return self.f.value(self.M.inverse_on_range(y))

    def grad(self, y):
        x = self.M.inverse_on_range(y)
        return self.M.apply(self.M.gram_inverse_apply(self.f.grad(x)))


class LiftedProx:
    """``g o M^{-1}`` (``+inf`` off the range of ``M``); its prox is ``M argmin_x g(x) + ||Mx - v||^2/(2 gamma)``."""

    def __init__(self, g, M):
        self.g, self.M = g, M

    def value(self, y):
        return self.g.value(self.M.inverse_on_range(y))

    def prox(self, gamma, v):
        return self.M.apply(_x_step(self.g, self.M, gamma, v))


def lift_problem(problem):
    """Change of variables ``y = Mx`` turning a composite problem into a split one."""
    return SplitProblem(LiftedSmooth(problem.f, problem.M), LiftedProx(problem.g, problem.M),
                        problem.h, problem.lipschitz, problem.smooth_is_zero)


def vu_condat_step(split, steps, y, lam):
    """
    ``lam+ = prox_{h*/rho}(lam + y/rho)``,
    ``y+ = prox_{tau gbar}(y - tau grad fbar(y) - tau (2 lam+ - lam))``.
    """
    tau, rho = steps.tau, steps.rho
    lam1 = moreau_prox_conjugate(split.h, rho, lam + y / rho)
    grad = 0.0 if split.smooth_is_zero else split.fbar.grad(y)
    y1 = split.gbar.prox(tau, y - tau * grad - tau * (2 * lam1 - lam))
    return y1, lam1


def vu_condat_operator(split, steps, shape, layout="single"):
    """
    The Vu-Condat iteration as a fixed-point map on ``(y, lam)``.

    The metric is ``[[I/tau, I], [I, rho I]]`` (primal block first). With
    ``layout="single"`` the flat state is ``[y, lam]`` in one block; with
    ``layout="pairs"`` coordinates are interleaved ``(y_i, lam_i)`` and each
    pair is its own block, which keeps the metric block-diagonal.
    """
    v = check_step_sizes(split, steps)
    n = int(np.prod(shape))
    V2 = np.array([[1.0 / steps.tau, 1.0], [1.0, steps.rho]])

    def unpack(s):
        if layout == "single":
            return s[:n].reshape(shape), s[n:].reshape(shape)
        return s[0::2].reshape(shape), s[1::2].reshape(shape)

    def pack(y, lam):
        if layout == "single":
            return np.concatenate([np.ravel(y), np.ravel(lam)])
        out = np.empty(2 * n)
        out[0::2], out[1::2] = np.ravel(y), np.ravel(lam)
        return out

    def apply(s):
        y, lam = unpack(s)
        return pack(*vu_condat_step(split, steps, y, lam))

    if layout == "single":
        metric = [np.kron(V2, np.eye(n))]
        sizes = [2 * n]
    elif layout == "pairs":
        metric = [V2] * n
        sizes = [2] * n
    else:
        raise ValueError(f"unknown layout {layout!r}")
    op = FixedPointOperator(apply, sizes, v.alpha, metric=metric)
    op.pack, op.unpack = pack, unpack
    return op


#%% driver

@dataclass
class SolveStop:
    tol: float = 1e-9
    max_iter: int = 10**5
    record_every: int = 1


def solve(problem, steps, x0=None, lam0=None, stop=None, objective=None, validate=True):
    """
    Run ADMM+ until ``max(primal, dual) <= tol`` or ``max_iter``.

    Returns the final :class:`PrimalDualState` and a :class:`Trace` whose
    ``objective`` is ``objective(x)`` (default ``f + g + h o M``, ``inf`` when
    ``Mx`` leaves ``dom h``) and whose ``consensus_residual`` column holds the
    primal residual ``||Mx - z||``.
    """
    if validate:
        check_step_sizes(problem, steps)
    stop = stop or SolveStop()
    objective = objective or problem.objective
    state = initial_state(problem, x0, lam0)
    trace = Trace()
    trace.append(0, 0, objective(state.x), 0.0)
    for k in range(1, stop.max_iter + 1):
        new = admm_plus_step(problem, steps, state)
        if not np.all(np.isfinite(new.x)) or np.max(np.abs(new.x), initial=0.0) > DIVERGENCE_BOUND:
            raise DivergenceError(k)
        primal, dual = primal_dual_residual(problem, steps, new, state)
        state = new
        done = max(primal, dual) <= stop.tol
        if done or k % stop.record_every == 0 or k == stop.max_iter:
            trace.append(k, k, objective(state.x), primal)
        if done:
            break
    return state, trace
