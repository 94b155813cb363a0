"""Solver-independent exact evaluation of policies.

The CTMC induced by a policy is solved directly for its stationary
distribution; throughput is the time average of f and voice blocking is the
stationary mass of blocking states (Poisson arrivals see time averages).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .model import EMPTY, ActionKind, EventKind, ModelParams, State, build_tables
from .policy import Policy, RandomizedPolicy

__all__ = [
    "PolicyEvaluation",
    "EvaluationError",
    "PolicyCountError",
    "erlang_b",
    "generator_matrix",
    "evaluate_policy_exact",
    "uniformized_chain",
    "uniformized_averages",
    "policy_count",
    "enumerate_policies",
    "brute_force_optimal",
    "brute_force_values",
]

POLICY_GUARD = 10**7
_E1 = EventKind.E1.index


class EvaluationError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class PolicyCountError(ValueError):
    def __init__(self, count: int, guard: int):
        super().__init__(f"instance has {count} deterministic policies, above the guard of {guard}")
        self.count = count
        self.guard = guard


@dataclass
class PolicyEvaluation:
    stationary: np.ndarray          # over all states, zero outside the recurrent class
    throughput: float               # Mbps, time average of f
    blocking: float                 # stationary mass of voice-blocking decisions
    recurrent_class: np.ndarray     # state indices
    residual: float
    blocking_flow: float            # 1 - mu_v E[i] / lambda_v
    event_throughput: float         # event-driven accumulation of f(s') / v(s')
    params: ModelParams

    def stationary_map(self) -> dict[State, float]:
        states = build_tables(self.params).space.states
        return {states[s]: float(self.stationary[s]) for s in self.recurrent_class}

    @property
    def recurrent_states(self) -> list[State]:
        states = build_tables(self.params).space.states
        return [states[s] for s in self.recurrent_class]

    def to_dict(self) -> dict:
        return {"throughput_mbps": self.throughput, "blocking": self.blocking,
                "recurrent_states": len(self.recurrent_class), "residual": self.residual}


def erlang_b(C: int, a: float) -> float:
    """Blocking probability of an M/M/C/C loss system with offered load ``a``."""
    if int(C) != C or C < 1:
        raise ValueError("C must be an integer >= 1")
    if not a > 0:
        raise ValueError("offered load must be positive")
    b = 1.0
    for n in range(1, int(C) + 1):
        b = a * b / (n + a * b)
    return b


def _mixture(policy) -> tuple[list[tuple[float, Policy]], ModelParams]:
    if isinstance(policy, RandomizedPolicy):
        parts = [(policy.p, policy.low), (1.0 - policy.p, policy.high)]
        return [(w, pol) for w, pol in parts if w > 0.0], policy.params
    return [(1.0, policy)], policy.params


def generator_matrix(policy, params: ModelParams | None = None) -> np.ndarray:
    """Dense CTMC generator under a pure or per-epoch randomized policy."""
    parts, own = _mixture(policy)
    params = params or own
    if params != own:
        raise ValueError("policy was built for different model parameters")
    t = build_tables(params)
    n = t.n
    Q = np.zeros((n, n))
    rows = np.repeat(np.arange(n), 5)
    rates = t.rates.reshape(-1)
    for w, pol in parts:
        succ = pol.successors().reshape(-1)
        ok = succ >= 0
        np.add.at(Q, (rows[ok], succ[ok]), w * rates[ok])
    Q[np.arange(n), np.arange(n)] -= t.total
    return Q


def _reachable(Q: np.ndarray, start: int) -> np.ndarray:
    adj = Q > 0
    seen = np.zeros(Q.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = np.flatnonzero(adj[frontier].any(axis=0) & ~seen)
        seen[nxt] = True
        frontier = nxt.tolist()
    return np.flatnonzero(seen)


def _stationary(Q_r: np.ndarray) -> tuple[np.ndarray, float]:
    m = Q_r.shape[0]
    A = Q_r.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    residual = float(np.abs(pi @ Q_r).max()) if m > 1 else 0.0
    return pi, residual


def evaluate_policy_exact(policy, params: ModelParams | None = None, residual_tol: float = 1e-12) -> PolicyEvaluation:
    """Stationary throughput and blocking of a policy on the class of (0, 0, 0)."""
    parts, own = _mixture(policy)
    params = params or own
    t = build_tables(params)
    Q = generator_matrix(policy, params)
    ref = t.space.index(EMPTY)
    rec = _reachable(Q - np.diag(np.diag(Q)), ref)
    # every reachable state drains back to (0,0,0) through departures, so the
    # reachable set is the recurrent class
    pi_r, residual = _stationary(Q[np.ix_(rec, rec)])
    scale = max(1.0, float(t.total.max()))
    if not residual <= residual_tol * scale or not abs(pi_r.sum() - 1.0) <= 1e-12:
        raise EvaluationError(f"stationary solve residual {residual:.3e} exceeds tolerance", residual)
    if pi_r.min() < -1e-12:
        raise EvaluationError(f"stationary solve gave negative mass {pi_r.min():.3e}", residual)
    pi = np.zeros(t.n)
    pi[rec] = np.clip(pi_r, 0.0, None)
    block = sum(w * pol.blocks_voice().astype(float) for w, pol in parts)
    throughput = float(pi @ t.f)
    blocking = float(pi @ block)
    blocking_flow = 1.0 - params.mu_v * float(pi @ t.space.i) / params.lambda_v

    # f(s') / v(s') accumulated at every event, including self-transitions
    acc = np.zeros(t.n)
    for w, pol in parts:
        succ = pol.successors()
        ok = succ >= 0
        tgt = np.where(ok, succ, 0)
        acc += w * np.where(ok, t.rates * t.f[tgt] / t.total[tgt], 0.0).sum(axis=1)
    event_throughput = float(pi @ acc)
    return PolicyEvaluation(pi, throughput, blocking, rec, residual, blocking_flow, event_throughput, params)


def uniformized_chain(policy, params: ModelParams | None = None) -> tuple[np.ndarray, float]:
    """Transition matrix of the uniformized discrete chain and its step ``delta``."""
    from .solver import uniformize

    parts, own = _mixture(policy)
    params = params or own
    um = uniformize(params)
    Q = generator_matrix(policy, params)
    return np.eye(um.n) + um.delta * Q, um.delta


def uniformized_averages(policy, params: ModelParams | None = None) -> tuple[float, float, np.ndarray]:
    """Per-unit-time reward and voice-blocking cost computed on the discrete chain.

    Each step earns ``delta * f`` of the post-step state and costs one per
    blocked voice arrival; dividing the stationary per-step averages by
    ``delta`` gives rates per unit time.
    """
    parts, own = _mixture(policy)
    params = params or own
    t = build_tables(params)
    P, delta = uniformized_chain(policy, params)
    ref = t.space.index(EMPTY)
    rec = _reachable(P - np.diag(np.diag(P)), ref)
    P_r = P[np.ix_(rec, rec)]
    mu, _ = _stationary(P_r - np.eye(len(rec)))
    step_reward = P_r @ (delta * t.f[rec])
    block = sum(w * pol.blocks_voice().astype(float) for w, pol in parts)
    step_cost = delta * params.lambda_v * block[rec]
    pi = np.zeros(t.n)
    pi[rec] = mu
    return float(mu @ step_reward) / delta, float(mu @ step_cost) / delta, pi


# ---------------------------------------------------------------------------
# exhaustive enumeration for tiny instances

def _decision_pairs(params: ModelParams):
    t = build_tables(params)
    feas = t.succ >= 0
    pairs, options = [], []
    fixed = np.zeros((t.n, 5), dtype=np.int8)
    for s in range(t.n):
        for e in range(5):
            acts = np.flatnonzero(feas[s, e])
            if len(acts) == 1:
                fixed[s, e] = acts[0] + 1
            elif len(acts) > 1:
                pairs.append((s, e))
                options.append(acts + 1)
    return pairs, options, fixed


def policy_count(params: ModelParams) -> int:
    _, options, _ = _decision_pairs(params)
    return math.prod(len(o) for o in options)


def enumerate_policies(params: ModelParams, guard: int = POLICY_GUARD) -> Iterator[Policy]:
    """All deterministic stationary policies; the last decision pair varies fastest."""
    count = policy_count(params)
    if count > guard:
        raise PolicyCountError(count, guard)
    pairs, options, fixed = _decision_pairs(params)

    def gen():
        for combo in itertools.product(*options):
            acts = fixed.copy()
            for (s, e), a in zip(pairs, combo):
                acts[s, e] = a
            yield Policy(params, acts)

    return gen()


def _policy_from_index(params, pairs, options, fixed, index: int) -> Policy:
    acts = fixed.copy()
    for (s, e), opts in zip(reversed(pairs), reversed(options)):
        index, digit = divmod(index, len(opts))
        acts[s, e] = opts[digit]
    return Policy(params, acts)


def brute_force_values(params: ModelParams, beta: float = 0.0, guard: int = POLICY_GUARD,
                       chunk: int = 32768) -> tuple[np.ndarray, np.ndarray]:
    """Throughput and blocking of every policy, in enumeration order (batched solve)."""
    count = policy_count(params)
    if count > guard:
        raise PolicyCountError(count, guard)
    t = build_tables(params)
    n = t.n
    pairs, options, fixed = _decision_pairs(params)
    sizes = np.array([len(o) for o in options], dtype=np.int64)
    strides = np.ones(len(sizes), dtype=np.int64)
    for d in range(len(sizes) - 2, -1, -1):
        strides[d] = strides[d + 1] * sizes[d + 1]

    base = -np.diag(t.total)
    base_block = np.zeros(n)
    for s in range(n):
        for e in range(5):
            a = fixed[s, e]
            if a:
                base[s, t.succ[s, e, a - 1]] += t.rates[s, e]
                if e == _E1 and a == ActionKind.A1:
                    base_block[s] = 1.0

    thr = np.empty(count)
    blk = np.empty(count)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    for start in range(0, count, chunk):
        idx = np.arange(start, min(start + chunk, count), dtype=np.int64)
        B = len(idx)
        Q = np.broadcast_to(base, (B, n, n)).copy()
        block = np.broadcast_to(base_block, (B, n)).copy()
        ar = np.arange(B)
        for d, ((s, e), opts) in enumerate(zip(pairs, options)):
            digit = (idx // strides[d]) % sizes[d]
            acts = np.asarray(opts)[digit]
            targets = t.succ[s, e, acts - 1]
            Q[ar, s, targets] += t.rates[s, e]
            if e == _E1:
                block[:, s] = acts == ActionKind.A1
        A = np.swapaxes(Q, 1, 2)
        A[:, -1, :] = 1.0
        pi = np.linalg.solve(A, np.broadcast_to(rhs, (B, n))[..., None])[..., 0]
        thr[start:start + B] = pi @ t.f
        blk[start:start + B] = np.einsum("bs,bs->b", pi, block)
    return thr, blk


def brute_force_optimal(params: ModelParams, beta: float = 0.0, guard: int = POLICY_GUARD):
    """``(best policy, best value)`` of throughput - beta * lambda_v * blocking.

    Ties (within 1e-12 relative) go to the earliest policy in enumeration order.
    """
    thr, blk = brute_force_values(params, beta, guard)
    values = thr - beta * params.lambda_v * blk
    best = values.max()
    first = int(np.argmax(values >= best - 1e-12 * max(1.0, abs(best))))
    pairs, options, fixed = _decision_pairs(params)
    return _policy_from_index(params, pairs, options, fixed, first), float(values[first])
