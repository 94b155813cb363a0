"""Population-level LTE/WiFi association model.

A state ``(i, j, k)`` counts voice users in LTE, data users in LTE and data
users in WiFi.  LTE has a common pool of ``C`` resource blocks (``i + j <= C``)
and WiFi admits at most ``W`` users.  Five events can occur and the
controller answers each with one of five actions; only some (event, action)
pairs are admissible in a given state.

Arrays indexed by event or action use zero-based positions
(``EventKind.E1.index == 0``); the enum values themselves are 1..5.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .wifi import ThroughputCurve, compute_k_th

__all__ = [
    "State",
    "EventKind",
    "ActionKind",
    "ModelParams",
    "ValidationError",
    "InfeasibleActionError",
    "StateSpace",
    "ModelTables",
    "EMPTY",
    "enumerate_states",
    "event_rate",
    "total_rate",
    "feasible_actions",
    "transition",
    "state_throughput",
    "reward",
    "cost",
    "build_tables",
    "data_threshold",
]


class ValidationError(ValueError):
    """Model or configuration parameters violate their invariants."""


class InfeasibleActionError(ValueError):
    def __init__(self, state, event, action):
        super().__init__(f"action {ActionKind(action).name} is not feasible for event "
                         f"{EventKind(event).name} in state {tuple(state)}")
        self.state = tuple(state)
        self.event = EventKind(event)
        self.action = ActionKind(action)


class State(NamedTuple):
    i: int
    j: int
    k: int


EMPTY = State(0, 0, 0)


class EventKind(IntEnum):
    E1 = 1  # voice arrival
    E2 = 2  # data arrival
    E3 = 3  # voice departure from LTE
    E4 = 4  # data departure from LTE
    E5 = 5  # data departure from WiFi

    @property
    def index(self) -> int:
        return self.value - 1


class ActionKind(IntEnum):
    A1 = 1  # block / do nothing
    A2 = 2  # accept in LTE
    A3 = 3  # accept data in WiFi
    A4 = 4  # accept voice in LTE, offload one LTE data user to WiFi
    A5 = 5  # move one data user into the RAT a user just left

    @property
    def index(self) -> int:
        return self.value - 1


EVENTS = tuple(EventKind)
ACTIONS = tuple(ActionKind)

# (event, action) -> (di, dj, dk)
_DELTA = {
    (EventKind.E1, ActionKind.A1): (0, 0, 0),
    (EventKind.E2, ActionKind.A1): (0, 0, 0),
    (EventKind.E3, ActionKind.A1): (-1, 0, 0),
    (EventKind.E4, ActionKind.A1): (0, -1, 0),
    (EventKind.E5, ActionKind.A1): (0, 0, -1),
    (EventKind.E1, ActionKind.A2): (1, 0, 0),
    (EventKind.E2, ActionKind.A2): (0, 1, 0),
    (EventKind.E2, ActionKind.A3): (0, 0, 1),
    (EventKind.E1, ActionKind.A4): (1, -1, 1),
    (EventKind.E3, ActionKind.A5): (-1, 1, -1),
    (EventKind.E4, ActionKind.A5): (0, 0, -1),
    (EventKind.E5, ActionKind.A5): (0, -1, 0),
}


@dataclass(frozen=True)
class ModelParams:
    """Rates (per time unit), capacities (users) and bit rates (Mbps)."""

    lambda_v: float
    lambda_d: float
    mu_v: float
    mu_d: float
    C: int
    W: int
    R_LV: float
    R_LD: float
    wifi_curve: ThroughputCurve

    def __post_init__(self):
        for name in ("lambda_v", "lambda_d", "mu_v", "mu_d", "R_LV", "R_LD"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
        for name in ("C", "W"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {value!r}")
        if self.wifi_curve.k_max < self.W:
            raise ValidationError(f"wifi curve covers k<={self.wifi_curve.k_max} but W={self.W}")

    @property
    def max_rate(self) -> float:
        """Largest total event rate over the state space."""
        return self.lambda_v + self.lambda_d + self.C * max(self.mu_v, self.mu_d) + self.W * self.mu_d

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "lambda_v": self.lambda_v, "lambda_d": self.lambda_d,
            "mu_v": self.mu_v, "mu_d": self.mu_d, "C": self.C, "W": self.W,
            "R_LV_mbps": self.R_LV, "R_LD_mbps": self.R_LD,
            "wifi_per_user_mbps": list(self.wifi_curve.per_user[: self.W]),
        }


def _check_state(s: State, params: ModelParams) -> None:
    i, j, k = s
    if min(i, j, k) < 0 or i + j > params.C or k > params.W:
        raise ValidationError(f"state {tuple(s)} is outside the state space (C={params.C}, W={params.W})")


def enumerate_states(params: ModelParams) -> list[State]:
    """All states, lexicographic in (i, j, k)."""
    C, W = params.C, params.W
    return [State(i, j, k) for i in range(C + 1) for j in range(C + 1 - i) for k in range(W + 1)]


class StateSpace:
    """Bijection between states and dense indices (lexicographic order)."""

    def __init__(self, params: ModelParams):
        self.C, self.W = params.C, params.W
        self.states = enumerate_states(params)
        self._index = {s: n for n, s in enumerate(self.states)}
        arr = np.array(self.states, dtype=np.int64).reshape(-1, 3)
        self.i, self.j, self.k = arr[:, 0], arr[:, 1], arr[:, 2]

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def index(self, s) -> int:
        try:
            return self._index[State(*s)]
        except KeyError:
            raise ValidationError(f"state {tuple(s)} is outside the state space") from None

    def __contains__(self, s) -> bool:
        return State(*s) in self._index


def event_rate(s: State, e: EventKind, params: ModelParams) -> float:
    i, j, k = s
    e = EventKind(e)
    if e is EventKind.E1:
        return params.lambda_v
    if e is EventKind.E2:
        return params.lambda_d
    if e is EventKind.E3:
        return i * params.mu_v
    if e is EventKind.E4:
        return j * params.mu_d
    return k * params.mu_d


def total_rate(s: State, params: ModelParams) -> float:
    i, j, k = s
    return params.lambda_v + params.lambda_d + i * params.mu_v + (j + k) * params.mu_d


def feasible_actions(s: State, e: EventKind, params: ModelParams) -> frozenset[ActionKind]:
    """Actions admissible for event ``e`` in state ``s``.

    Departures of an absent population have no admissible action (the event
    has zero rate).
    """
    i, j, k = s
    C, W = params.C, params.W
    lte_full = i + j == C
    wifi_full = k == W
    e = EventKind(e)
    A = ActionKind
    out = set()
    if e is EventKind.E1:
        if (i, j, k) != EMPTY:
            out.add(A.A1)
        if not lte_full:
            out.add(A.A2)
        if j > 0 and not wifi_full:
            out.add(A.A4)
    elif e is EventKind.E2:
        if lte_full and wifi_full:
            out.add(A.A1)
        if not lte_full:
            out.add(A.A2)
        if not wifi_full:
            out.add(A.A3)
    elif e is EventKind.E3:
        if i > 0:
            out.add(A.A1)
            if k > 0:
                out.add(A.A5)
    elif e is EventKind.E4:
        if j > 0:
            out.add(A.A1)
            if k > 0:
                out.add(A.A5)
    else:
        if k > 0:
            out.add(A.A1)
            if j > 0:
                out.add(A.A5)
    return frozenset(out)


def transition(s: State, e: EventKind, a: ActionKind, params: ModelParams) -> State:
    """Deterministic successor of ``s`` under event ``e`` and action ``a``."""
    s = State(*s)
    e, a = EventKind(e), ActionKind(a)
    if a not in feasible_actions(s, e, params):
        raise InfeasibleActionError(s, e, a)
    di, dj, dk = _DELTA[(e, a)]
    return State(s.i + di, s.j + dj, s.k + dk)


def state_throughput(s: State, params: ModelParams) -> float:
    """Total system throughput f(i, j, k) in Mbps."""
    i, j, k = s
    return i * params.R_LV + j * params.R_LD + params.wifi_curve.total(k)


def reward(s: State, e: EventKind, a: ActionKind, params: ModelParams) -> float:
    """Throughput rate of the post-decision state."""
    return state_throughput(transition(s, e, a, params), params)


def cost(s: State, e: EventKind, a: ActionKind) -> int:
    """1 for a blocked voice arrival, 0 otherwise."""
    return int(EventKind(e) is EventKind.E1 and ActionKind(a) is ActionKind.A1)


@dataclass(eq=False)
class ModelTables:
    """Dense arrays over (state, event, action) used by solvers and simulators.

    ``succ[s, e, a]`` is the successor index or -1 when the action is not
    admissible.  ``rates[s, e]`` are event rates, ``f[s]`` the state
    throughput and ``cost[s, e, a]`` the voice-blocking indicator.
    """

    params: ModelParams
    space: StateSpace
    rates: np.ndarray
    total: np.ndarray
    f: np.ndarray
    succ: np.ndarray
    cost: np.ndarray

    @property
    def n(self) -> int:
        return len(self.space)

    @property
    def feasible(self) -> np.ndarray:
        return self.succ >= 0

    def self_index(self) -> np.ndarray:
        return np.arange(self.n)


@functools.lru_cache(maxsize=64)
def build_tables(params: ModelParams) -> ModelTables:
    space = StateSpace(params)
    n = len(space)
    rates = np.zeros((n, 5))
    succ = np.full((n, 5, 5), -1, dtype=np.int32)
    f = np.array([state_throughput(s, params) for s in space])
    for si, s in enumerate(space):
        for e in EVENTS:
            rates[si, e.index] = event_rate(s, e, params)
            for a in feasible_actions(s, e, params):
                succ[si, e.index, a.index] = space.index(transition(s, e, a, params))
    c = np.zeros((n, 5, 5))
    c[:, EventKind.E1.index, ActionKind.A1.index] = 1.0
    c[succ < 0] = 0.0
    for arr in (rates, succ, f, c):
        arr.setflags(write=False)
    total = rates.sum(axis=1)
    total.setflags(write=False)
    return ModelTables(params, space, rates, total, f, succ, c)


def data_threshold(params: ModelParams) -> tuple[int, bool]:
    """``(k_th, condition_valid)`` over the WiFi populations the model can reach."""
    return compute_k_th(params.wifi_curve.truncated(params.W), params.R_LD)
