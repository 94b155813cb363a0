"""Average-reward solution of the association MDP and its blocking-constrained version.

The continuous-time problem is uniformized with step
``delta = 1 / (lambda_v + lambda_d + C mu_v + (C + W) mu_d)``, the reciprocal
of an upper bound on every total event rate ``v(s)``.
One step of the discrete chain from state ``s`` triggers event ``l`` with
probability ``delta * rate(s, l)`` and stays put otherwise.  Each step earns
``delta * f(s')`` where ``s'`` is the post-decision state (``s`` itself on a
self-loop) and pays ``beta`` for a blocked voice arrival.  With this
normalization the per-step gain divided by ``delta`` is the time-average
throughput minus ``beta * lambda_v * B``, so ``g`` is directly comparable with
the exact policy evaluator.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .model import EMPTY, ModelParams, ModelTables, State, build_tables, data_threshold
from .oracle import evaluate_policy_exact
from .policy import Policy, RandomizedPolicy, maximal_acceptance_policy

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "UniformizedModel",
    "ValueFunction",
    "SolveResult",
    "CMDPResult",
    "SolverError",
    "ConvergenceError",
    "NumericalError",
    "InfeasibleConstraintError",
    "uniformize",
    "bellman_update",
    "greedy_policy",
    "value_iteration",
    "solve_unconstrained",
    "solve_at_beta",
    "solve_cmdp",
]


class SolverError(RuntimeError):
    """Base class for solver failures."""


class ConvergenceError(SolverError):
    def __init__(self, message: str, span_residual: float = float("nan"), trace=None):
        super().__init__(message)
        self.span_residual = span_residual
        self.trace = trace or []


class NumericalError(SolverError):
    def __init__(self, state: State):
        super().__init__(f"value iteration produced a non-finite value at state {tuple(state)}")
        self.state = state


class InfeasibleConstraintError(SolverError):
    """No policy meets the blocking bound; ``B_min`` is the best achievable value."""

    def __init__(self, B_min: float, B_max: float, policy: Policy | None = None, beta_trace=None):
        super().__init__(f"blocking bound {B_max:.6g} is infeasible; "
                         f"the minimum achievable blocking is {B_min:.6g}")
        self.B_min = B_min
        self.B_max = B_max
        self.policy = policy
        self.beta_trace = beta_trace or []


@dataclass(frozen=True)
class SolverConfig:
    via_tolerance: float = 1e-9
    via_max_iters: int = 200_000
    beta_init: float = 0.0
    beta_tolerance: float = 1e-5
    beta_max_iters: int = 200
    beta_phase1_iters: int = 25
    beta_gain: float | None = None  # default: max f / min(mu_v, mu_d)
    beta_cap: float | None = None   # default: 1e4 * max f
    epsilon: float | None = None    # default: 1e-3 * max(1, beta*)
    epsilon_rel: float = 1e-3
    tie_break: str = "lowest"
    tie_tolerance: float = 1e-12
    refine_mixing: bool = True

    def __post_init__(self):
        for name in ("via_tolerance", "beta_tolerance", "tie_tolerance", "epsilon_rel"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolverConfig.{name} must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("SolverConfig.epsilon must be positive")
        for name in ("via_max_iters", "beta_max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"SolverConfig.{name} must be at least 1")
        if self.beta_phase1_iters < 0:
            raise ValueError("SolverConfig.beta_phase1_iters must be non-negative")
        if self.beta_init < 0:
            raise ValueError("SolverConfig.beta_init must be non-negative")
        if self.tie_break not in ("lowest", "highest"):
            raise ValueError("tie_break must be 'lowest' or 'highest'")

    def replace(self, **changes) -> "SolverConfig":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(eq=False)
class UniformizedModel:
    """Discrete-time view of the model.

    ``reward_hat[s, l, a]`` is the throughput rate of the post-decision state
    (NaN where the action is not admissible); the recursion scales it by
    ``delta``.  ``cost_hat`` is the voice-blocking indicator.
    """

    params: ModelParams
    tables: ModelTables
    delta: float
    event_prob: np.ndarray
    self_loop: np.ndarray
    reward_hat: np.ndarray
    cost_hat: np.ndarray
    ref_index: int = 0

    @property
    def n(self) -> int:
        return self.tables.n

    @property
    def succ(self) -> np.ndarray:
        return self.tables.succ

    @property
    def f(self) -> np.ndarray:
        return self.tables.f


def uniformize(params: ModelParams) -> UniformizedModel:
    t = build_tables(params)
    # Every v(s) is at most this sum, so all self-loop probabilities are >= 0.
    v_max = params.lambda_v + params.lambda_d + params.C * params.mu_v + (params.C + params.W) * params.mu_d
    delta = 1.0 / v_max
    event_prob = t.rates * delta
    self_loop = 1.0 - event_prob.sum(axis=1)
    self_loop[np.abs(self_loop) < 1e-15] = 0.0
    reward_hat = np.where(t.succ >= 0, t.f[np.maximum(t.succ, 0)], np.nan)
    return UniformizedModel(params, t, delta, event_prob, self_loop, reward_hat,
                            np.array(t.cost), ref_index=t.space.index(EMPTY))


@dataclass
class ValueFunction:
    v: np.ndarray
    g: float
    iterations: int
    span_residual: float
    params: ModelParams | None = None

    def __getitem__(self, s) -> float:
        return float(self.v[build_tables(self.params).space.index(s)])

    @property
    def span(self) -> float:
        return float(self.v.max() - self.v.min())

    def rows(self):
        for s, val in zip(build_tables(self.params).space.states, self.v):
            yield (*s, float(val))


@dataclass
class SolveResult:
    value: ValueFunction
    policy: Policy
    g: float
    beta: float
    converged: bool
    span_trace: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def iterations(self) -> int:
        return self.value.iterations


def _kernel_inputs(um: UniformizedModel):
    t = um.tables
    return (np.ascontiguousarray(um.event_prob), np.ascontiguousarray(um.self_loop),
            np.ascontiguousarray(t.succ, dtype=np.int32), np.ascontiguousarray(um.delta * t.f),
            np.ascontiguousarray(um.cost_hat, dtype=np.float64))


def q_values(um: UniformizedModel, v: np.ndarray, beta: float) -> np.ndarray:
    """Q[s, l, a] = delta f(s') + v(s') - beta c; -inf where not admissible."""
    t = um.tables
    u = np.append(um.delta * t.f + v, -np.inf)
    return u[t.succ] - beta * um.cost_hat


def greedy_policy(um: UniformizedModel, v: np.ndarray, beta: float, tie_break: str = "lowest",
                  tie_tolerance: float = 1e-12) -> Policy:
    """Greedy actions; near-ties within ``tie_tolerance`` (relative) go to the lowest index."""
    q = q_values(um, v, beta)
    best = q.max(axis=2, keepdims=True)
    near = q >= best - tie_tolerance * np.maximum(1.0, np.abs(best))
    near &= np.isfinite(q)
    if tie_break == "lowest":
        choice = np.argmax(near, axis=2)
    else:
        choice = 4 - np.argmax(near[:, :, ::-1], axis=2)
    acts = np.where(um.tables.rates > 0, choice + 1, 0).astype(np.int8)
    return Policy(um.params, acts)


def bellman_update(v_n: ValueFunction, um: UniformizedModel, beta: float, params: ModelParams | None = None,
                   tie_break: str = "lowest"):
    """One relative Bellman step.  Returns ``(v_{n+1}, greedy policy w.r.t. v_n)``."""
    v = np.asarray(v_n.v, dtype=np.float64)
    new = kernels.bellman_sweep(*_kernel_inputs(um), float(beta), v)
    bad = np.flatnonzero(~np.isfinite(new))
    if bad.size:
        raise NumericalError(um.tables.space.states[bad[0]])
    d = new - v
    out = ValueFunction(new - new[um.ref_index], float(0.5 * (d.max() + d.min())) / um.delta,
                        v_n.iterations + 1, float(d.max() - d.min()), um.params)
    return out, greedy_policy(um, v, beta, tie_break)


def value_iteration(um: UniformizedModel, beta: float, config: SolverConfig | None = None,
                    params: ModelParams | None = None, v0: np.ndarray | None = None) -> SolveResult:
    config = config or SolverConfig()
    phat, selfp, succ, fhat, cost = _kernel_inputs(um)
    start = np.zeros(um.n) if v0 is None else np.array(v0, dtype=np.float64)
    trace = np.full(min(config.via_max_iters, 1_000_000), np.nan)
    v, mid, span, iters, converged, bad = kernels.relative_via(
        phat, selfp, succ, fhat, cost, float(beta), start, um.ref_index, um.delta,
        config.via_tolerance, config.via_max_iters, trace)
    if bad >= 0:
        raise NumericalError(um.tables.space.states[bad])
    if not converged:
        raise ConvergenceError(f"value iteration did not converge in {iters} iterations "
                               f"(span residual {span:.3e})", span_residual=span)
    g = mid / um.delta
    vf = ValueFunction(np.asarray(v), g, int(iters), float(span), um.params)
    policy = greedy_policy(um, vf.v, beta, config.tie_break, config.tie_tolerance)
    return SolveResult(vf, policy, g, float(beta), True, trace[:iters])


def solve_at_beta(params: ModelParams, beta: float, config: SolverConfig | None = None,
                  v0: np.ndarray | None = None) -> SolveResult:
    return value_iteration(uniformize(params), beta, config, params, v0)


def solve_unconstrained(params: ModelParams, config: SolverConfig | None = None) -> SolveResult:
    return solve_at_beta(params, 0.0, config)


@dataclass
class CMDPResult:
    """Outcome of the constrained solve.

    ``status`` is ``"slack"`` (the unconstrained policy already meets the
    bound), ``"binding"`` (a mixture meets it with equality) or
    ``"min_blocking"`` (the bound is met only by the maximal-acceptance rule).
    """

    policy: RandomizedPolicy
    status: str
    B_max: float
    beta_star: float
    epsilon: float
    p: float
    p_linear: float
    B_low: float
    B_high: float
    blocking: float
    throughput: float
    B_min: float
    k_th: int
    beta_trace: list = field(default_factory=list)
    monotonicity_violations: list = field(default_factory=list)
    unconstrained_throughput: float = float("nan")

    def diagnostics(self) -> dict:
        return {
            "status": self.status, "B_max": self.B_max, "beta_star": self.beta_star,
            "epsilon": self.epsilon, "p": self.p, "p_linear": self.p_linear,
            "B_low": self.B_low, "B_high": self.B_high, "blocking": self.blocking,
            "throughput_mbps": self.throughput, "B_min": self.B_min, "k_th": self.k_th,
            "unconstrained_throughput_mbps": self.unconstrained_throughput,
            "beta_trace": [{"beta": b, "blocking": B} for b, B in self.beta_trace],
            "monotonicity_violations": self.monotonicity_violations,
        }


class _BetaOracle:
    """Memoized solve-and-evaluate at a given beta, warm-started from the nearest solve."""

    def __init__(self, params: ModelParams, config: SolverConfig):
        self.params = params
        self.config = config
        self.um = uniformize(params)
        self.cache: dict[float, tuple[SolveResult, float]] = {}
        self.trace: list[tuple[float, float]] = []

    def __call__(self, beta: float) -> tuple[SolveResult, float]:
        beta = float(beta)
        if beta in self.cache:
            return self.cache[beta]
        v0 = None
        if self.cache:
            nearest = min(self.cache, key=lambda b: abs(b - beta))
            v0 = self.cache[nearest][0].value.v
        res = value_iteration(self.um, beta, self.config, self.params, v0)
        B = evaluate_policy_exact(res.policy, self.params).blocking
        self.cache[beta] = (res, B)
        self.trace.append((beta, B))
        log.debug("beta=%.6g blocking=%.9g", beta, B)
        return res, B

    def monotonicity_violations(self, tol: float = 1e-12) -> list:
        pts = sorted(self.cache.items())
        out = []
        for (b0, (_, B0)), (b1, (_, B1)) in zip(pts, pts[1:]):
            if B1 > B0 + tol:
                out.append({"beta_lo": b0, "beta_hi": b1, "B_lo": B0, "B_hi": B1})
        for v in out:
            log.warning("blocking increased with beta: %s", v)
        return out


def _mixed_blocking(low: Policy, high: Policy, p: float, params: ModelParams):
    ev = evaluate_policy_exact(RandomizedPolicy(low, high, p), params)
    return ev.blocking, ev.throughput


def solve_cmdp(params: ModelParams, B_max: float, config: SolverConfig | None = None) -> CMDPResult:
    """Lagrangian search for beta* and the randomized mixture meeting ``B_max``.

    Raises :class:`InfeasibleConstraintError` when even the least-blocking
    policy exceeds ``B_max`` by more than ``beta_tolerance``.
    """
    if not 0.0 < B_max <= 1.0:
        raise ValueError(f"B_max must lie in (0, 1], got {B_max}")
    config = config or SolverConfig()
    tol = config.beta_tolerance
    k_th, _ = data_threshold(params)
    max_f = float(build_tables(params).f.max())
    gain = config.beta_gain if config.beta_gain is not None else max_f / min(params.mu_v, params.mu_d)
    cap = config.beta_cap if config.beta_cap is not None else 1e4 * max_f
    oracle = _BetaOracle(params, config)

    res0, B0 = oracle(0.0)
    T0 = evaluate_policy_exact(res0.policy, params).throughput
    if B0 <= B_max:
        log.info("blocking constraint is slack (B=%.6g <= %.6g)", B0, B_max)
        return CMDPResult(RandomizedPolicy.pure(res0.policy, 0.0), "slack", B_max, 0.0, 0.0, 1.0, 1.0,
                          B0, B0, B0, T0, float("nan"), k_th, list(oracle.trace), [], T0)

    maxacc = maximal_acceptance_policy(params, k_th)
    ev_maxacc = evaluate_policy_exact(maxacc, params)
    res_cap, B_cap = oracle(cap)
    B_min = min(ev_maxacc.blocking, B_cap)
    min_policy = res_cap.policy if B_cap <= ev_maxacc.blocking else maxacc
    if B_min > B_max + tol:
        log.info("blocking bound %.6g infeasible (minimum %.6g)", B_max, B_min)
        raise InfeasibleConstraintError(B_min, B_max, min_policy, list(oracle.trace))
    if B_cap > B_max + tol:
        # only the hand-built rule reaches the bound; no multiplier does
        log.warning("no multiplier up to %.3g meets the bound; using maximal acceptance", cap)
        return CMDPResult(RandomizedPolicy.pure(maxacc, cap), "min_blocking", B_max, cap, 0.0, 1.0, 1.0,
                          ev_maxacc.blocking, ev_maxacc.blocking, ev_maxacc.blocking, ev_maxacc.throughput,
                          B_min, k_th, list(oracle.trace), oracle.monotonicity_violations(), T0)

    # Phase 1: projected stochastic-approximation step with a 1/k schedule.
    lo, hi = 0.0, cap  # B(lo) > B_max, B(hi) <= B_max + tol
    beta_star = None
    beta = min(max(config.beta_init, 0.0), cap)
    B = B0 if beta == 0.0 else oracle(beta)[1]
    n_solves = 0
    last_sign = 0
    for k in range(1, config.beta_phase1_iters + 1):
        err = B - B_max
        if abs(err) <= tol:
            beta_star = beta
            break
        if err > 0:
            lo = max(lo, beta)
        else:
            hi = min(hi, beta)
        step = (gain / k) * err
        sign = 1 if err > 0 else -1
        if last_sign and sign != last_sign and abs(step) < tol:
            break  # oscillating around the jump; finish by bisection
        last_sign = sign
        beta = min(max(beta + step, 0.0), cap)
        _, B = oracle(beta)
        n_solves += 1
    else:
        err = B - B_max
        if abs(err) <= tol:
            beta_star = beta
        elif err > 0:
            lo = max(lo, beta)
        else:
            hi = min(hi, beta)

    # Phase 2: bisection on the bracket until its width is below epsilon.
    if beta_star is None:
        while True:
            mid = 0.5 * (lo + hi)
            eps = config.epsilon if config.epsilon is not None else config.epsilon_rel * max(1.0, mid)
            if hi - lo <= eps:
                beta_star = mid
                break
            if n_solves >= config.beta_max_iters:
                raise ConvergenceError(f"multiplier search did not converge in {n_solves} solves",
                                       trace=list(oracle.trace))
            _, B = oracle(mid)
            n_solves += 1
            if abs(B - B_max) <= tol:
                beta_star = mid
                break
            if B > B_max:
                lo = mid
            else:
                hi = mid

    eps = config.epsilon if config.epsilon is not None else config.epsilon_rel * max(1.0, beta_star)
    res_low, B_low = oracle(max(beta_star - eps, 0.0))
    res_high, B_high = oracle(beta_star + eps)
    low, high = res_low.policy, res_high.policy

    if B_low <= B_max:
        p = p_linear = 1.0
    elif B_high >= B_max:
        p = p_linear = 0.0
    else:
        p_linear = (B_max - B_high) / (B_low - B_high)
        p = p_linear
        if config.refine_mixing and not low.same_as(high):
            # per-epoch mixing is not linear in p; solve the mixed chain exactly
            p = brentq(lambda q: _mixed_blocking(low, high, q, params)[0] - B_max, 0.0, 1.0,
                       xtol=1e-13, rtol=4 * np.finfo(float).eps)
    blocking, throughput = _mixed_blocking(low, high, p, params)
    rp = RandomizedPolicy(low, high, float(p), beta_star=float(beta_star), epsilon=float(eps))
    viol = oracle.monotonicity_violations()
    log.info("binding constraint: beta*=%.6g p=%.6g (linear %.6g) B=%.9g", beta_star, p, p_linear, blocking)
    return CMDPResult(rp, "binding", B_max, float(beta_star), float(eps), float(p), float(p_linear),
                      B_low, B_high, blocking, throughput, B_min, k_th, list(oracle.trace), viol, T0)
