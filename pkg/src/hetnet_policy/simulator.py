"""Discrete-event simulation of the controlled loss system.

Each step draws one holding time at the total rate ``v(s)`` and then picks
the event in proportion to its rate (competing exponentials).  Random
numbers come from three independent Philox streams per replication, keyed by
``(base_seed, replication, purpose)``, so the Bernoulli draws of a
randomized policy never shift the event stream and different policies can be
compared on common random numbers.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .model import EMPTY, ActionKind, EventKind, ModelParams, State, ValidationError, build_tables
from .policy import Policy, RandomizedPolicy, on_the_spot_policy
from .structure import ThresholdTables, algorithm1_policy

__all__ = [
    "SimConfig",
    "SimMetrics",
    "PolicyImpl",
    "SimulationError",
    "simulate",
    "policy_algorithm1",
    "policy_algorithm2",
    "policy_on_the_spot",
    "as_policy_impl",
]

_PURPOSE = {"holding": 0, "event": 1, "decision": 2}
Z95 = 1.96


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Events are counted per replication; ``horizon_events`` includes the warm-up."""

    horizon_events: int = 10**6
    warmup_events: int = 10**5
    replications: int = 20
    base_seed: int = 0
    rng: str = "philox"
    chunk_events: int = 1 << 16

    def __post_init__(self):
        if self.warmup_events < 0:
            raise ValidationError("warmup_events must be non-negative")
        if not self.warmup_events < self.horizon_events:
            raise ValidationError("warmup_events must be smaller than horizon_events")
        if self.replications < 1:
            raise ValidationError("replications must be at least 1")
        if self.rng != "philox":
            raise ValidationError(f"unsupported generator {self.rng!r}; only 'philox' is available")
        if self.chunk_events < 1:
            raise ValidationError("chunk_events must be positive")

    def replace(self, **changes) -> "SimConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def stream(self, replication: int, purpose: str) -> np.random.Generator:
        ss = np.random.SeedSequence([int(self.base_seed), int(replication), _PURPOSE[purpose]])
        return np.random.Generator(np.random.Philox(ss))


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")
    return mean, se


@dataclass
class SimMetrics:
    blocking: np.ndarray         # per replication
    throughput: np.ndarray       # per replication, Mbps
    voice_arrivals: np.ndarray
    voice_blocked: np.ndarray
    sim_time: np.ndarray
    policy_name: str = ""
    config: SimConfig | None = None

    @property
    def blocking_fraction(self) -> float:
        return _mean_se(self.blocking)[0]

    @property
    def blocking_stderr(self) -> float:
        return _mean_se(self.blocking)[1]

    @property
    def mean_throughput_mbps(self) -> float:
        return _mean_se(self.throughput)[0]

    @property
    def throughput_stderr(self) -> float:
        return _mean_se(self.throughput)[1]

    @property
    def blocking_ci(self) -> tuple[float, float]:
        m, se = _mean_se(self.blocking)
        return m - Z95 * se, m + Z95 * se

    @property
    def throughput_ci(self) -> tuple[float, float]:
        m, se = _mean_se(self.throughput)
        return m - Z95 * se, m + Z95 * se

    def to_dict(self) -> dict:
        return {
            "policy": self.policy_name,
            "replications": int(len(self.blocking)),
            "blocking_fraction": self.blocking_fraction,
            "blocking_stderr": self.blocking_stderr,
            "blocking_ci95": list(self.blocking_ci),
            "mean_throughput_mbps": self.mean_throughput_mbps,
            "throughput_stderr": self.throughput_stderr,
            "throughput_ci95": list(self.throughput_ci),
        }

    def replications_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "blocking", "throughput_mbps", "voice_arrivals", "voice_blocked", "sim_time"])
        for r in range(len(self.blocking)):
            w.writerow([r, repr(float(self.blocking[r])), repr(float(self.throughput[r])),
                        int(self.voice_arrivals[r]), int(self.voice_blocked[r]), repr(float(self.sim_time[r]))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class PolicyImpl:
    """A decision rule ready for simulation: ``low`` w.p. ``p`` else ``high`` at each epoch."""

    name: str
    low: Policy
    high: Policy
    p: float = 1.0

    @property
    def params(self) -> ModelParams:
        return self.low.params

    def tables(self):
        def block(pol):
            return np.ascontiguousarray(pol.blocks_voice().astype(np.uint8))
        return (np.ascontiguousarray(self.low.successors(), dtype=np.int64),
                np.ascontiguousarray(self.high.successors(), dtype=np.int64),
                block(self.low), block(self.high))


def policy_algorithm1(thresholds: ThresholdTables, k_th: int | None = None) -> PolicyImpl:
    if k_th is not None and k_th != thresholds.k_th:
        thresholds = ThresholdTables(thresholds.params, int(k_th), thresholds.va_lc, thresholds.va_c)
    pol = algorithm1_policy(thresholds)
    return PolicyImpl("algorithm1", pol, pol, 1.0)


def policy_algorithm2(rp: RandomizedPolicy) -> PolicyImpl:
    return PolicyImpl("algorithm2", rp.low, rp.high, float(rp.p))


def policy_on_the_spot(params: ModelParams) -> PolicyImpl:
    pol = on_the_spot_policy(params)
    return PolicyImpl("on_the_spot", pol, pol, 1.0)


def as_policy_impl(obj, params: ModelParams | None = None) -> PolicyImpl:
    """Accept a PolicyImpl, Policy, RandomizedPolicy or ``fn(state, event) -> action``."""
    if isinstance(obj, PolicyImpl):
        return obj
    if isinstance(obj, Policy):
        return PolicyImpl(obj.name or "policy", obj, obj, 1.0)
    if isinstance(obj, RandomizedPolicy):
        return PolicyImpl("randomized", obj.low, obj.high, float(obj.p))
    if callable(obj):
        if params is None:
            raise ValueError("params are required to tabulate a policy function")
        pol = Policy.from_function(params, obj, name=getattr(obj, "__name__", "policy"))
        return PolicyImpl(pol.name, pol, pol, 1.0)
    raise TypeError(f"cannot simulate {type(obj).__name__}")


def _cumulative_rates(rates: np.ndarray) -> np.ndarray:
    cum = np.cumsum(rates, axis=1)
    # the last event with a positive rate absorbs any rounding at the top end
    last = 4 - np.argmax(rates[:, ::-1] > 0, axis=1)
    cum[np.arange(len(cum)), last] = np.inf
    return np.ascontiguousarray(cum)


def simulate(policy_impl, params: ModelParams | None = None, sim_config: SimConfig | None = None,
             backend=None) -> SimMetrics:
    """Run ``sim_config.replications`` independent replications from the empty state."""
    impl = as_policy_impl(policy_impl, params)
    params = params or impl.params
    if impl.params != params:
        raise ValueError("policy was built for different model parameters")
    cfg = sim_config or SimConfig()
    kern = backend or kernels
    t = build_tables(params)
    cum = _cumulative_rates(t.rates)
    vtot = np.ascontiguousarray(t.total)
    f = np.ascontiguousarray(t.f)
    nl, nh, bl, bh = impl.tables()
    R = cfg.replications
    out = {k: np.zeros(R) for k in ("blocking", "throughput", "arr", "blk", "time")}
    start = t.space.index(EMPTY)
    for r in range(R):
        g_h, g_e, g_d = (cfg.stream(r, p) for p in ("holding", "event", "decision"))
        s, skip = start, cfg.warmup_events
        remaining = cfg.horizon_events
        time = area = 0.0
        arrivals = blocked = 0
        while remaining > 0:
            m = min(cfg.chunk_events, remaining)
            res = kern.simulate_chunk(cum, vtot, f, nl, nh, bl, bh, float(impl.p), s,
                                      g_h.standard_exponential(m), g_e.random(m), g_d.random(m), skip)
            s, skip, dt, da, na, nb, _, bad_s, bad_e = res
            if bad_s >= 0:
                raise SimulationError(f"no successor for {EventKind(bad_e + 1).name} in state "
                                      f"{tuple(t.space.states[bad_s])}")
            time += dt
            area += da
            arrivals += na
            blocked += nb
            remaining -= m
        out["time"][r] = time
        out["arr"][r] = arrivals
        out["blk"][r] = blocked
        out["blocking"][r] = blocked / arrivals if arrivals else float("nan")
        out["throughput"][r] = area / time
    return SimMetrics(out["blocking"], out["throughput"], out["arr"], out["blk"], out["time"], impl.name, cfg)
