"""
Benchmark pipeline: data, logistic problem, step-size grid search, runs.

The objective is the l2-regularized logistic cost
``F(x) = (1/m) sum_t log(1 + exp(-y_t a_t'x)) + (mu/2) ||x||^2``, split as
``f_n(x) = (1/m) sum_{t in B_n} log(1 + exp(-y_t a_t'x)) + mu/(2N) ||x||^2``
over agents ``n`` holding the observations ``B_n``.
"""

import math
import os
import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .avgop import DIVERGENCE_BOUND, DivergenceError
from .dataio import make_synthetic, partition, read_libsvm, standardize
from .distributed import DistributedProblem, consensus_residual, run_distributed
from .functions import LogisticLoss, SquaredNorm, ZeroFunction, lipschitz_estimate
from .graph import parse_graph_spec
from .primal_dual import (StepSizeError, StepSizes, admm_plus_step, check_step_sizes,
                          forward_backward_step, initial_state, lift_problem, vu_condat_step)
from .trace import Trace, emit_trace

DISTRIBUTED = ("dadmm_plus", "dapd", "dgd", "abg", "pwg")
CENTRALIZED = ("admm_plus", "vu_condat", "fb", "admm")
ALGORITHMS = DISTRIBUTED + CENTRALIZED
PRIMAL_DUAL = ("dadmm_plus", "dapd", "admm_plus", "vu_condat")
GOSSIP = ("dgd", "abg", "pwg")

GRID_EXPONENTS = tuple(range(1, 11))
GRID_ITERATIONS = 50
THEORY_SAFETY = 1.01


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """
    One benchmark run.

    ``data`` is ``synthetic:MxP`` or a LIBSVM path (optionally prefixed by
    ``file:``). ``steps`` is ``auto`` (grid search), ``theory``,
    ``tau=..,rho=..`` or ``gamma=..``.
    """

    algorithm: str = "dapd"
    data: str = "synthetic:2000x50"
    graph: str = "torus:5x5"
    agents: Optional[int] = None
    mu: float = 1e-4
    steps: str = "auto"
    budget: int = 100000
    seed: int = 0
    out: Optional[str] = None
    format: Optional[str] = None
    record_every: Optional[int] = None
    partition: str = "balanced"
    standardize: bool = True
    evaluate_at: str = "agent"
    timing: bool = False

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.budget < 0:
            raise ConfigError("budget must be nonnegative")
        if not self.mu >= 0:
            raise ConfigError("mu must be nonnegative")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigError("record-every must be a positive integer")
        if self.evaluate_at not in ("agent", "average"):
            raise ConfigError("evaluate-at must be 'agent' or 'average'")
        if self.format not in (None, "csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.partition not in ("balanced", "contiguous"):
            raise ConfigError("partition must be balanced or contiguous")
        path = _data_path(self.data)
        if path is not None and not os.path.isfile(path):
            raise ConfigError(f"data file {path!r} does not exist")
        if self.graph.startswith("file:") and not os.path.isfile(self.graph[5:]):
            raise ConfigError(f"graph file {self.graph[5:]!r} does not exist")
        if self.algorithm == "admm":
            raise ConfigError("admm needs f = 0; the logistic benchmark has a smooth loss")
        parse_steps(self.steps)
        return self

    @property
    def trace_format(self):
        if self.format:
            return self.format
        return "json" if self.out and self.out.endswith(".json") else "csv"


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(name, text):
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    text = str(text).strip()
    try:
        if kind in (int, "int"):
            return int(float(text)) if _is_integral(text) else int(text)
        if kind in (float, "float"):
            return float(text)
        if kind in (bool, "bool"):
            return _BOOL[text.lower()]
        if "Optional[int]" in str(kind):
            return None if text.lower() in ("", "none") else int(float(text)) if _is_integral(text) else int(text)
        if "Optional[str]" in str(kind):
            return None if text.lower() in ("", "none") else text
    except (ValueError, KeyError):
        raise ConfigError(f"bad value {text!r} for {name}") from None
    return text


def _is_integral(text):
    try:
        v = float(text)
    except ValueError:
        return False
    return math.isfinite(v) and v == int(v)


def _key(name):
    key = name.strip().replace("-", "_")
    if key not in {f.name for f in fields(ExperimentConfig)}:
        raise ConfigError(f"unknown configuration key {name!r}")
    return key


def parse_config_text(text):
    """``key = value`` lines; ``#`` starts a comment; keys may use dashes."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key = _key(key)
        values[key] = _coerce(key, value)
    return values


def load_config(path=None, overrides=None):
    """Defaults, then the config file, then ``overrides`` (already typed or strings)."""
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = _key(key)
        values[key] = _coerce(key, value) if isinstance(value, str) else value
    return ExperimentConfig(**values).validate()


def parse_steps(spec):
    """
    ``auto`` / ``theory`` or explicit values.

    Returns the string for the symbolic forms, a :class:`StepSizes` for
    ``tau=..,rho=..`` and a float for ``gamma=..``.
    """
    spec = spec.strip()
    if spec in ("auto", "theory"):
        return spec
    parts = {}
    for item in spec.split(","):
        k, sep, v = item.partition("=")
        if not sep:
            raise ConfigError(f"bad steps {spec!r}; use auto, theory, tau=..,rho=.. or gamma=..")
        try:
            parts[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"bad step value {v!r}") from None
    if set(parts) == {"tau", "rho"}:
        return StepSizes(parts["tau"], parts["rho"])
    if set(parts) == {"tau"}:
        return StepSizes(parts["tau"], 2 * parts["tau"])
    if set(parts) == {"gamma"}:
        return parts["gamma"]
    raise ConfigError(f"bad steps {spec!r}; use auto, theory, tau=..,rho=.. or gamma=..")


def _data_path(data):
    if data.startswith("synthetic:"):
        return None
    return data[5:] if data.startswith("file:") else data


#%% problem construction

@dataclass
class Benchmark:
    """A logistic problem split over the agents of a graph."""

    problem: DistributedProblem
    graph: object
    features: np.ndarray
    labels: np.ndarray
    mu: float
    lhat: float
    blocks: list = field(default_factory=list)

    def central_smooth(self):
        return LogisticLoss(self.features, self.labels) + SquaredNorm(self.mu)


def logistic_objective(features, labels, mu):
    loss = LogisticLoss(features, labels)

    def F(x):
        x = np.asarray(x, dtype=float)
        return loss.value(x) + 0.5 * mu * float(x @ x)

    return F


def build_logistic_problem(features, labels, blocks, mu):
    """
    Agents' terms for the regularized logistic cost.

    ``Lbar`` is ``0.25 max_t ||a_t||^2``, which bounds every local constant
    ``0.25 |B_n| max ||a_t||^2 / m + mu/N`` when no agent holds more than
    half of the data.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    m = labels.shape[0]
    N = len(blocks)
    f_terms = [LogisticLoss(features[b], labels[b], scale=1.0 / m) + SquaredNorm(mu / N) for b in blocks]
    lhat = lipschitz_estimate(LogisticLoss(features, labels))
    lbar = max(lhat, max(f.lipschitz for f in f_terms))
    problem = DistributedProblem(f_terms, dim=features.shape[1],
                                 objective=logistic_objective(features, labels, mu), lipschitz=lbar)
    return problem, lhat


def load_benchmark(config):
    """load -> standardize -> partition -> graph."""
    if config.data.startswith("synthetic:"):
        try:
            m, p = (int(v) for v in config.data[len("synthetic:"):].lower().split("x"))
        except ValueError:
            raise ConfigError(f"bad synthetic spec {config.data!r}; use synthetic:MxP") from None
        if m < 1 or p < 1:
            raise ConfigError("synthetic dimensions must be positive")
        ds = make_synthetic(m, p, seed=config.seed)
    else:
        ds = read_libsvm(_data_path(config.data))
    A = standardize(ds.features) if config.standardize else ds.dense()
    try:
        graph = parse_graph_spec(config.graph, seed=config.seed)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    if config.agents is not None and config.agents != graph.n_nodes:
        raise ConfigError(f"agents={config.agents} but graph {config.graph!r} has {graph.n_nodes} nodes")
    try:
        blocks = partition(ds.m, graph.n_nodes, config.partition, seed=config.seed).blocks
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    problem, lhat = build_logistic_problem(A, ds.labels, blocks, config.mu)
    return Benchmark(problem, graph, A, ds.labels, config.mu, lhat, blocks)


#%% step sizes

def theory_parameter(algorithm, bench):
    """
    Base value of the scanned step.

    Primal-dual methods: ``tau = d_min / (1.01 Lbar)`` with ``rho = 2 tau``,
    which meets ``1/tau - 1/rho > Lbar / (2 d_min)`` with 1% slack. Gossip
    baselines: ``gamma0 = 1 / Lhat``. Forward-backward: ``1 / L`` of the
    full cost.
    """
    if algorithm in PRIMAL_DUAL:
        tau = bench.graph.d_min / (THEORY_SAFETY * bench.problem.lipschitz)
        return StepSizes(tau, 2 * tau)
    if algorithm in GOSSIP:
        return 1.0 / bench.lhat
    if algorithm == "fb":
        return 1.0 / bench.central_smooth().lipschitz
    raise ConfigError(f"no step rule for {algorithm!r}")


def scale_parameter(base, factor):
    if isinstance(base, StepSizes):
        return StepSizes(base.tau * factor, base.rho * factor)
    return base * factor


def grid_candidates(algorithm, bench):
    """``theory * 10**i`` for ``i = 1..10``; the primal-dual scan keeps ``rho = 2 tau``."""
    base = theory_parameter(algorithm, bench)
    return [scale_parameter(base, 10.0 ** i) for i in GRID_EXPONENTS]


#%% runs

def run_centralized(algorithm, bench, params, budget, record_every=None, timing=False,
                    evaluate_at="agent", validate=True, max_iter=None):
    """
    ADMM+, Vu-Condat (on the consensus reformulation) or forward-backward.

    Every iteration evaluates all ``N`` local gradients.
    """
    N = bench.graph.n_nodes
    problem = bench.problem
    trace = Trace()
    start = time.perf_counter()

    def record(k, X):
        x = X[0] if evaluate_at == "agent" else X.mean(axis=0)
        seconds = time.perf_counter() - start if timing else 0.0
        trace.append(k, k * N, problem.objective(x), consensus_residual(X), seconds)

    if algorithm == "fb":
        f = bench.central_smooth()
        tau = float(params)
        if validate and not (tau > 0 and tau < 2.0 / f.lipschitz):
            raise StepSizeError(f"forward-backward needs 0 < tau < 2/L = {2.0 / f.lipschitz:.6g}",
                                margin=2.0 / f.lipschitz - tau)
        x = np.zeros(problem.dim)
        step = lambda x: x - tau * f.grad(x)
        if validate:
            step = lambda x: forward_backward_step(f, ZeroFunction(), tau, x)
        view = lambda x: np.broadcast_to(x, (N, problem.dim))
    else:
        lifted = problem.lifted(bench.graph)
        if validate:
            check_step_sizes(lifted, params)
        if algorithm == "admm_plus":
            x = initial_state(lifted)
            step = lambda s: admm_plus_step(lifted, params, s)
            view = lambda s: s.x
        elif algorithm == "vu_condat":
            split = lift_problem(lifted)
            M = lifted.M
            x = (M.apply(np.zeros(M.in_shape)), np.zeros(M.out_shape))
            step = lambda s: vu_condat_step(split, params, *s)
            view = lambda s: M.inverse_on_range(s[0])
        else:
            raise ConfigError(f"{algorithm!r} is not available on the logistic benchmark")

    record(0, view(x))
    every = max(1, (record_every or N) // N)
    k = 0
    while (k + 1) * N <= budget and (max_iter is None or k < max_iter):
        x = step(x)
        k += 1
        X = np.asarray(view(x))
        if k % every == 0 or (k + 1) * N > budget or k == max_iter:
            record(k, X)
            if not np.all(np.isfinite(X)) or np.abs(X).max() > DIVERGENCE_BOUND \
                    or not math.isfinite(trace.last.objective):
                err = DivergenceError(k)
                err.trace = trace
                raise err
    if trace.last.k != k:
        record(k, np.asarray(view(x)))
    return trace


def run_algorithm(algorithm, bench, params, seed, budget, record_every=None, timing=False,
                  evaluate_at="agent", validate=True, max_rounds=None):
    if algorithm in DISTRIBUTED:
        return run_distributed(algorithm, bench.problem, bench.graph, params, seed=seed, budget=budget,
                               record_every=record_every, timing=timing, evaluate_at=evaluate_at,
                               validate=validate, max_rounds=max_rounds)
    return run_centralized(algorithm, bench, params, budget, record_every=record_every, timing=timing,
                           evaluate_at=evaluate_at, validate=validate, max_iter=max_rounds)


@dataclass
class GridResult:
    chosen: object
    exponent: int
    candidates: list
    scores: list

    def table(self):
        rows = []
        for i, (c, s) in enumerate(zip(self.candidates, self.scores), start=GRID_EXPONENTS[0]):
            rows.append((i, describe_params(c), s))
        return rows


def describe_params(params):
    if isinstance(params, StepSizes):
        return f"tau={params.tau:.6g},rho={params.rho:.6g}"
    return f"gamma={params:.6g}"


def grid_search(algorithm, bench, seed, iterations=GRID_ITERATIONS, candidates=None):
    """
    Score every candidate by its objective after ``iterations`` rounds.

    Candidates are run with the step guard switched off, since the scan
    deliberately goes beyond the theoretical range; those that blow up or
    end on a non-finite value are scored ``inf`` and never chosen. Ties go
    to the smaller step.

    Raises
    ------
    DivergenceError
        If every candidate diverged.
    """
    candidates = grid_candidates(algorithm, bench) if candidates is None else list(candidates)
    scores = []
    for params in candidates:
        try:
            trace = run_algorithm(algorithm, bench, params, seed, budget=math.inf,
                                  validate=False, max_rounds=iterations)
            score = trace.last.objective
        except (DivergenceError, FloatingPointError, OverflowError):
            score = math.inf
        scores.append(score if math.isfinite(score) else math.inf)
    best = None
    for i, s in enumerate(scores):
        if math.isfinite(s) and (best is None or s < scores[best]):
            best = i
    if best is None:
        raise DivergenceError(iterations, f"all {len(candidates)} grid candidates for {algorithm} diverged")
    return GridResult(candidates[best], GRID_EXPONENTS[0] + best if len(candidates) == len(GRID_EXPONENTS) else best,
                      candidates, scores)


def resolve_steps(config, bench):
    """Explicit steps, the theory value, or the grid-search winner."""
    spec = parse_steps(config.steps)
    if isinstance(spec, StepSizes):
        if config.algorithm not in PRIMAL_DUAL:
            raise ConfigError(f"{config.algorithm} takes gamma=.., not tau/rho")
        return spec, None
    if not isinstance(spec, str):
        if config.algorithm in PRIMAL_DUAL:
            raise ConfigError(f"{config.algorithm} takes tau=..,rho=.., not gamma")
        return spec, None
    if spec == "theory" or config.algorithm == "fb":
        return theory_parameter(config.algorithm, bench), None
    grid = grid_search(config.algorithm, bench, config.seed)
    return grid.chosen, grid


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    params: object
    trace: Trace
    grid: Optional[GridResult] = None

    def summary(self):
        last = self.trace.last
        lines = [
            f"algorithm           {self.config.algorithm}",
            f"steps               {describe_params(self.params)}",
            f"rounds              {last.k}",
            f"local gradients     {last.grads}",
            f"final objective     {last.objective:.12g}",
            f"best objective      {self.trace.best_objective():.12g}",
            f"consensus residual  {last.consensus_residual:.6g}",
        ]
        if self.config.out:
            lines.append(f"trace               {self.config.out}")
        return "\n".join(lines)


def run_experiment(config, stream=None):
    """
    Full pipeline; writes the trace when ``config.out`` is set and prints a summary.

    Explicit steps are checked against the step condition before any
    iteration; grid-searched and theory steps are used as given.
    """
    config.validate()
    bench = load_benchmark(config)
    params, grid = resolve_steps(config, bench)
    explicit = not isinstance(parse_steps(config.steps), str)
    record_every = config.record_every or max(1, config.budget // 100)
    try:
        trace = run_algorithm(config.algorithm, bench, params, config.seed, config.budget,
                              record_every=record_every, timing=config.timing,
                              evaluate_at=config.evaluate_at, validate=explicit)
    except DivergenceError as exc:
        partial = getattr(exc, "trace", None)
        if config.out and partial is not None:
            emit_trace(partial, config.trace_format, config.out)
        raise
    if config.out:
        emit_trace(trace, config.trace_format, config.out)
    result = ExperimentResult(config, params, trace, grid)
    if stream is not None:
        print(result.summary(), file=stream)
    return result
