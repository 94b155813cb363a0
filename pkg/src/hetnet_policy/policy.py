"""Stationary policies over (state, event) pairs and the built-in baselines."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .model import (
    ActionKind,
    EventKind,
    InfeasibleActionError,
    ModelParams,
    State,
    ValidationError,
    build_tables,
)

__all__ = [
    "Policy",
    "RandomizedPolicy",
    "on_the_spot_policy",
    "maximal_acceptance_policy",
    "read_policy_csv",
]

_E1, _E2 = EventKind.E1.index, EventKind.E2.index
_A1 = ActionKind.A1.index


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic stationary policy.

    ``actions[s, e]`` holds the ActionKind value (1..5) chosen for event ``e``
    in state index ``s``, or 0 where the event cannot occur.  With
    ``allow_data_blocking`` the policy may answer a data arrival with A1
    while LTE still has room; this is outside the model's action sets and is
    only used by the on-the-spot baseline, where the arrival is simply lost.
    """

    params: ModelParams
    actions: np.ndarray
    allow_data_blocking: bool = False
    name: str = ""
    _succ: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        tables = build_tables(self.params)
        acts = np.asarray(self.actions, dtype=np.int8)
        if acts.shape != (tables.n, 5):
            raise ValidationError(f"policy table has shape {acts.shape}, expected {(tables.n, 5)}")
        succ = np.full((tables.n, 5), -1, dtype=np.int64)
        for s in range(tables.n):
            for e in range(5):
                a = int(acts[s, e])
                if tables.rates[s, e] == 0.0:
                    # departures of an absent population: no action exists
                    if a != 0:
                        raise InfeasibleActionError(tables.space.states[s], e + 1, a)
                    continue
                if a == 0:
                    raise ValidationError(f"policy has no action for {EventKind(e + 1).name} "
                                          f"in state {tuple(tables.space.states[s])}")
                target = tables.succ[s, e, a - 1]
                if target < 0:
                    if self.allow_data_blocking and e == _E2 and a == ActionKind.A1:
                        target = s
                    else:
                        raise InfeasibleActionError(tables.space.states[s], e + 1, a)
                succ[s, e] = target
        acts.setflags(write=False)
        succ.setflags(write=False)
        object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "_succ", succ)

    @classmethod
    def from_function(cls, params: ModelParams, fn: Callable[[State, EventKind], ActionKind],
                      allow_data_blocking: bool = False, name: str = "") -> "Policy":
        """Tabulate ``fn(state, event)`` on every pair with a positive event rate."""
        tables = build_tables(params)
        acts = np.zeros((tables.n, 5), dtype=np.int8)
        for s, state in enumerate(tables.space):
            for e in EventKind:
                if tables.rates[s, e.index] > 0:
                    acts[s, e.index] = int(fn(state, e))
        return cls(params, acts, allow_data_blocking=allow_data_blocking, name=name)

    @property
    def n_states(self) -> int:
        return self.actions.shape[0]

    def action(self, s, e) -> ActionKind:
        idx = build_tables(self.params).space.index(s)
        a = int(self.actions[idx, EventKind(e).index])
        if a == 0:
            raise ValidationError(f"event {EventKind(e).name} cannot occur in state {tuple(s)}")
        return ActionKind(a)

    __call__ = action

    def successors(self) -> np.ndarray:
        """Successor state index for every (state, event); -1 where the rate is zero."""
        return self._succ

    def blocks_voice(self) -> np.ndarray:
        """Boolean mask of states in which a voice arrival is blocked."""
        return self.actions[:, _E1] == ActionKind.A1

    def same_as(self, other: "Policy") -> bool:
        return self.params == other.params and np.array_equal(self.actions, other.actions)

    def differences(self, other: "Policy") -> list[tuple[State, EventKind, ActionKind, ActionKind]]:
        states = build_tables(self.params).space.states
        rows, cols = np.nonzero(self.actions != other.actions)
        return [(states[r], EventKind(c + 1), ActionKind(self.actions[r, c]), ActionKind(other.actions[r, c]))
                for r, c in zip(rows, cols)]

    def rows(self):
        states = build_tables(self.params).space.states
        for s, state in enumerate(states):
            for e in range(5):
                a = int(self.actions[s, e])
                if a:
                    yield (*state, EventKind(e + 1).name, ActionKind(a).name)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "k", "event", "action"])
        w.writerows(self.rows())
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def read_policy_csv(source, params: ModelParams, allow_data_blocking: bool = False) -> Policy:
    """Parse a policy CSV written by :meth:`Policy.to_csv` (path or text)."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text()
    tables = build_tables(params)
    acts = np.zeros((tables.n, 5), dtype=np.int8)
    reader = csv.DictReader(io.StringIO(text))
    missing = {"i", "j", "k", "event", "action"} - set(reader.fieldnames or [])
    if missing:
        raise ValidationError(f"policy CSV lacks columns {sorted(missing)}")
    for lineno, row in enumerate(reader, start=2):
        try:
            s = tables.space.index((int(row["i"]), int(row["j"]), int(row["k"])))
            e = EventKind[row["event"].strip()]
            a = ActionKind[row["action"].strip()]
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"policy CSV line {lineno}: {exc}") from None
        acts[s, e.index] = a.value
    return Policy(params, acts, allow_data_blocking=allow_data_blocking)


@dataclass(frozen=True, eq=False)
class RandomizedPolicy:
    """Per-epoch mixture: ``low`` with probability ``p``, ``high`` otherwise.

    ``low`` is the policy solved at beta* - epsilon (less blocking-averse,
    more blocking) and ``high`` the one at beta* + epsilon.
    """

    low: Policy
    high: Policy
    p: float
    beta_star: float = float("nan")
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"mixing probability must lie in [0, 1], got {self.p}")
        if self.low.params != self.high.params:
            raise ValidationError("mixed policies must share model parameters")

    @property
    def params(self) -> ModelParams:
        return self.low.params

    @classmethod
    def pure(cls, policy: Policy, beta: float = 0.0) -> "RandomizedPolicy":
        return cls(policy, policy, 1.0, beta_star=beta, epsilon=0.0)

    @property
    def is_pure(self) -> bool:
        return self.p in (0.0, 1.0) or self.low.same_as(self.high)

    def choose(self, s, e, u: float) -> ActionKind:
        """Action for a decision whose uniform draw is ``u``."""
        return (self.low if u < self.p else self.high).action(s, e)


def on_the_spot_policy(params: ModelParams) -> Policy:
    """Voice to LTE while it has room; data to WiFi while it has room; no moves."""
    A = ActionKind

    def rule(s: State, e: EventKind) -> ActionKind:
        if e is EventKind.E1:
            return A.A2 if s.i + s.j < params.C else A.A1
        if e is EventKind.E2:
            return A.A3 if s.k < params.W else A.A1
        return A.A1

    return Policy.from_function(params, rule, allow_data_blocking=True, name="on_the_spot")


def maximal_acceptance_policy(params: ModelParams, k_th: int) -> Policy:
    """Accept every voice arrival that any accept action can admit.

    Voice prefers A4 below ``k_th`` and A2 at or above it; data placement and
    departures follow the data threshold ``k_th``.
    """
    A = ActionKind
    C, W = params.C, params.W

    def rule(s: State, e: EventKind) -> ActionKind:
        i, j, k = s
        lte_room = i + j < C
        can_offload = j > 0 and k < W
        if e is EventKind.E1:
            if lte_room:
                return A.A4 if (k < k_th and can_offload) else A.A2
            return A.A4 if can_offload else A.A1
        if e is EventKind.E2:
            if lte_room:
                return A.A3 if (k < k_th and k < W) else A.A2
            return A.A3 if k < W else A.A1
        if e in (EventKind.E3, EventKind.E4):
            return A.A5 if (k > k_th and k > 0) else A.A1
        return A.A5 if (k <= k_th and j > 0) else A.A1

    return Policy.from_function(params, rule, name="maximal_acceptance")
