"""Threshold extraction and numerical checks of the optimal-policy structure.

Data-user rules: below the data threshold ``k_th`` arrivals go to WiFi, at or
above it to LTE, and departures re-balance toward ``k_th`` WiFi users.
Voice-user rules: below ``k_th`` accept with offload (A4), otherwise plain
LTE accept (A2); blocking is monotone in the LTE occupancy.  The value
function checks test concavity in ``i``, submodularity in ``(i, j)`` and the
monotone boundary difference that underlie those threshold shapes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ActionKind, EventKind, ModelParams, State, build_tables, data_threshold
from .policy import Policy

__all__ = [
    "ThresholdTables",
    "ThresholdExtractionError",
    "CheckResult",
    "StructureReport",
    "extract_thresholds",
    "algorithm1_action",
    "algorithm1_policy",
    "verify_data_rules",
    "verify_voice_rules",
    "verify_value_structure",
    "verify_structure",
]

A = ActionKind
E = EventKind


class ThresholdExtractionError(ValueError):
    def __init__(self, row: str, blocking: State, accepting: State):
        super().__init__(f"policy is not of threshold type in row {row}: {tuple(blocking)} blocks "
                         f"but {tuple(accepting)} accepts")
        self.row = row
        self.blocking = blocking
        self.accepting = accepting


@dataclass(frozen=True, eq=False)
class ThresholdTables:
    """Voice-admission thresholds.

    ``va_lc[j, k]`` is the smallest ``i`` with ``i + j < C`` at which a voice
    arrival is blocked (``C - j`` if never).  ``va_c[j, k]`` is the same
    threshold on the full-LTE boundary ``i + j = C``; only one state per
    ``(j, k)`` lies on the boundary, so the value depends on ``k`` alone and
    is stored for every ``j``.
    """

    params: ModelParams
    k_th: int
    va_lc: np.ndarray
    va_c: np.ndarray

    def lc(self, j: int, k: int) -> int:
        return int(self.va_lc[j, k])

    def c(self, j: int, k: int) -> int:
        return int(self.va_c[j, k])

    def to_dict(self) -> dict:
        return {"k_th": self.k_th, "va_lc": self.va_lc.tolist(), "va_c": self.va_c[0].tolist()}


def _e1(policy: Policy, space, s) -> int:
    return int(policy.actions[space.index(s), E.E1.index])


def extract_thresholds(policy: Policy, params: ModelParams | None = None, k_th: int | None = None) -> ThresholdTables:
    params = params or policy.params
    if k_th is None:
        k_th, _ = data_threshold(params)
    space = build_tables(params).space
    C, W = params.C, params.W
    va_lc = np.zeros((C + 1, W + 1), dtype=np.int64)
    va_c = np.zeros((C + 1, W + 1), dtype=np.int64)
    for k in range(W + 1):
        for j in range(C + 1):
            row = [_e1(policy, space, (i, j, k)) for i in range(C - j)]
            blocked = [i for i, a in enumerate(row) if a == A.A1]
            thr = blocked[0] if blocked else C - j
            for i in range(thr + 1, C - j):
                if row[i] != A.A1:
                    raise ThresholdExtractionError(f"va_lc(j={j}, k={k})", State(thr, j, k), State(i, j, k))
            va_lc[j, k] = thr
        boundary = [_e1(policy, space, (i, C - i, k)) for i in range(C + 1)]
        blocked = [i for i, a in enumerate(boundary) if a == A.A1]
        thr = blocked[0]  # i = C always blocks
        for i in range(thr + 1, C + 1):
            if boundary[i] != A.A1:
                raise ThresholdExtractionError(f"va_c(k={k})", State(thr, C - thr, k), State(i, C - i, k))
        va_c[:, k] = thr
    va_lc.setflags(write=False)
    va_c.setflags(write=False)
    return ThresholdTables(params, int(k_th), va_lc, va_c)


def algorithm1_action(tables: ThresholdTables, s, e) -> ActionKind:
    """Threshold rules of the network-initiated algorithm, with feasibility fallbacks.

    Where the rule's preferred action is not admissible (offloading with no
    LTE data user or a full WiFi, a WiFi move with nobody to move) the
    closest admissible action is used: A2 for a voice accept, A1 otherwise.
    """
    i, j, k = s
    p = tables.params
    C, W, k_th = p.C, p.W, tables.k_th
    e = EventKind(e)
    can_offload = j > 0 and k < W
    if e is E.E1:
        if i + j < C:
            if i >= tables.lc(j, k):
                return A.A1
            if k >= k_th or not can_offload:
                return A.A2
            return A.A4
        return A.A4 if (i < tables.c(j, k) and can_offload) else A.A1
    if e is E.E2:
        if i + j < C:
            return A.A3 if (k < k_th and k < W) else A.A2
        return A.A3 if k < W else A.A1
    if e in (E.E3, E.E4):
        return A.A1 if k <= k_th else A.A5
    return A.A5 if (k <= k_th and j > 0) else A.A1


def algorithm1_policy(tables: ThresholdTables) -> Policy:
    return Policy.from_function(tables.params, lambda s, e: algorithm1_action(tables, s, e), name="algorithm1")


@dataclass
class CheckResult:
    name: str
    violations: list = field(default_factory=list)
    checked: int = 0
    informational: bool = False

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"passed": self.passed, "informational": self.informational, "checked": self.checked,
                "violations": [
                    {"state": list(v[0]), "event": v[1].name, "expected": v[2].name, "actual": v[3].name}
                    if len(v) == 4 else {"detail": [list(x) if isinstance(x, tuple) else x for x in v]}
                    for v in self.violations]}


@dataclass
class StructureReport:
    threshold_condition_valid: bool
    k_th: int
    checks: dict = field(default_factory=dict)
    value_residuals: dict = field(default_factory=dict)  # name -> (worst slack, tol, informational)
    thresholds: ThresholdTables | None = None
    extraction_error: str | None = None
    reconstruction_mismatches: int | None = None

    def merge(self, other: "StructureReport") -> "StructureReport":
        self.checks.update(other.checks)
        self.value_residuals.update(other.value_residuals)
        return self

    @property
    def hard_failures(self) -> list[str]:
        out = [name for name, r in self.checks.items() if not r.passed and not r.informational]
        out += [name for name, (worst, tol, info) in self.value_residuals.items() if worst > tol and not info]
        if self.reconstruction_mismatches and self.threshold_condition_valid:
            out.append("threshold_reconstruction")
        return out

    @property
    def passed(self) -> bool:
        return not self.hard_failures

    def to_dict(self) -> dict:
        return {
            "threshold_condition_valid": self.threshold_condition_valid,
            "k_th": self.k_th,
            "passed": self.passed,
            "hard_failures": self.hard_failures,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "value_residuals": {k: {"worst_slack": w, "tolerance": t, "informational": i}
                                for k, (w, t, i) in self.value_residuals.items()},
            "thresholds": self.thresholds.to_dict() if self.thresholds is not None else None,
            "extraction_error": self.extraction_error,
            "reconstruction_mismatches": self.reconstruction_mismatches,
        }

    def summary(self) -> str:
        lines = [f"Data threshold condition: {'holds' if self.threshold_condition_valid else 'FAILS'} (k_th={self.k_th})"]
        for name, r in self.checks.items():
            tag = "info" if r.informational else ("ok" if r.passed else "FAIL")
            lines.append(f"  {name:<24} {tag:<5} {len(r.violations)} violations / {r.checked} checks")
        for name, (worst, tol, info) in self.value_residuals.items():
            tag = "info" if info else ("ok" if worst <= tol else "FAIL")
            lines.append(f"  {name:<24} {tag:<5} worst slack {worst:.3e} (tol {tol:.3e})")
        if self.extraction_error:
            lines.append(f"  threshold extraction failed: {self.extraction_error}")
        elif self.reconstruction_mismatches is not None:
            lines.append(f"  threshold reconstruction mismatches: {self.reconstruction_mismatches}")
        return "\n".join(lines)


def _flag(params: ModelParams, k_th, valid):
    if k_th is None or valid is None:
        kt, ok = data_threshold(params)
        k_th = kt if k_th is None else k_th
        valid = ok if valid is None else valid
    return k_th, valid


def _check(result: CheckResult, policy: Policy, space, s, e, expected):
    result.checked += 1
    actual = ActionKind(policy.actions[space.index(s), EventKind(e).index])
    if actual != expected:
        result.violations.append((State(*s), EventKind(e), ActionKind(expected), actual))


def verify_data_rules(policy: Policy, k_th: int | None = None, params: ModelParams | None = None,
                       condition_valid: bool | None = None) -> StructureReport:
    """Data placement and re-balancing rules on every applicable state."""
    params = params or policy.params
    k_th, valid = _flag(params, k_th, condition_valid)
    space = build_tables(params).space
    C, W = params.C, params.W
    info = not valid
    l1, l2, l3 = (CheckResult(n, informational=info) for n in ("data_to_wifi", "data_to_lte",
                                                                 "data_full_lte"))
    for s in space:
        i, j, k = s
        if i + j < C:
            if k < k_th and k < W:
                _check(l1, policy, space, s, E.E2, A.A3)
            elif k >= k_th:
                _check(l2, policy, space, s, E.E2, A.A2)
        else:
            _check(l3, policy, space, s, E.E2, A.A3 if k < W else A.A1)
        target = l1 if k <= k_th else l2
        for e in (E.E3, E.E4):
            if (i if e is E.E3 else j) > 0:
                _check(target, policy, space, s, e, A.A1 if k <= k_th else A.A5)
        if k > 0:
            _check(target, policy, space, s, E.E5, A.A5 if (k <= k_th and j > 0) else A.A1)
    return StructureReport(valid, k_th, {r.name: r for r in (l1, l2, l3)})


def verify_voice_rules(policy: Policy, k_th: int | None = None, params: ModelParams | None = None,
                        condition_valid: bool | None = None) -> StructureReport:
    """Accept-action choice and monotone blocking for voice arrivals."""
    params = params or policy.params
    k_th, valid = _flag(params, k_th, condition_valid)
    tables = build_tables(params)
    space = tables.space
    C, W = params.C, params.W
    info = not valid
    l4 = CheckResult("voice_accept_action", informational=info)
    l5i = CheckResult("voice_block_monotone", informational=info)
    l5ii = CheckResult("voice_accept_monotone", informational=info)
    l6i = CheckResult("boundary_block_monotone", informational=info)
    l6ii = CheckResult("boundary_offload_monotone", informational=info)

    def act(s):
        return ActionKind(policy.actions[space.index(s), E.E1.index])

    def feasible(s, a):
        return tables.succ[space.index(s), E.E1.index, a.index] >= 0

    for s in space:
        i, j, k = s
        a = act(s)
        if i + j < C:
            if a != A.A1 and feasible(s, A.A2) and feasible(s, A.A4):
                _check(l4, policy, space, s, E.E1, A.A4 if k < k_th else A.A2)
            if a == A.A1:
                for t in ((i + 1, j, k), (i, j + 1, k)):
                    if t[0] + t[1] < C:
                        _check(l5i, policy, space, t, E.E1, A.A1)
            else:
                for t in ((i - 1, j, k), (i, j - 1, k)):
                    if min(t) >= 0 and feasible(t, a):
                        _check(l5ii, policy, space, t, E.E1, a)
        else:
            if a == A.A1 and j > 0:
                _check(l6i, policy, space, (i + 1, j - 1, k), E.E1, A.A1)
            if a == A.A4 and i > 0:
                _check(l6ii, policy, space, (i - 1, j + 1, k), E.E1, A.A4)
    return StructureReport(valid, k_th, {r.name: r for r in (l4, l5i, l5ii, l6i, l6ii)})


def verify_value_structure(value, k_th: int | None = None, params: ModelParams | None = None,
                           condition_valid: bool | None = None, rel_tol: float = 1e-6) -> StructureReport:
    """Second-difference checks on a converged relative value function.

    Scope: states with ``k >= k_th`` are binding; the same inequalities on
    ``k < k_th`` are reported as informational.
    """
    params = params or value.params
    k_th, valid = _flag(params, k_th, condition_valid)
    space = build_tables(params).space
    v = np.asarray(value.v if hasattr(value, "v") else value, dtype=float)
    C, W = params.C, params.W
    tol = rel_tol * float(v.max() - v.min())

    def V(i, j, k):
        return v[space.index((i, j, k))]

    worst = {name: -np.inf for name in ("concave_i", "submodular_ij", "boundary_difference")}
    worst_low = dict(worst)
    for k in range(W + 1):
        bucket = worst if k >= k_th else worst_low
        for i in range(C + 1):
            for j in range(C + 1 - i):
                if i + j + 2 <= C:
                    dii = V(i + 2, j, k) + V(i, j, k) - 2 * V(i + 1, j, k)
                    dij = V(i + 1, j + 1, k) + V(i, j, k) - V(i + 1, j, k) - V(i, j + 1, k)
                    bucket["concave_i"] = max(bucket["concave_i"], dii)
                    bucket["submodular_ij"] = max(bucket["submodular_ij"], dij)
                if i + j == C and j >= 2 and k + 1 <= W:
                    lhs = V(i + 2, j - 2, k + 1) - V(i + 1, j - 1, k)
                    rhs = V(i + 1, j - 1, k + 1) - V(i, j, k)
                    bucket["boundary_difference"] = max(bucket["boundary_difference"], lhs - rhs)
    out = {}
    for name, w in worst.items():
        if np.isfinite(w):
            out[name] = (float(w), tol, not valid)
    for name, w in worst_low.items():
        if np.isfinite(w):
            out[f"{name}_below_k_th"] = (float(w), tol, True)
    return StructureReport(valid, k_th, value_residuals=out)


def verify_structure(policy: Policy, value=None, params: ModelParams | None = None,
                     k_th: int | None = None) -> StructureReport:
    """All checks, plus threshold extraction and the reconstruction comparison.

    An extraction failure is recorded in the report rather than raised.
    """
    params = params or policy.params
    kt, valid = data_threshold(params)
    k_th = kt if k_th is None else k_th
    report = verify_data_rules(policy, k_th, params, valid)
    report.merge(verify_voice_rules(policy, k_th, params, valid))
    if value is not None:
        report.merge(verify_value_structure(value, k_th, params, valid))
    try:
        tables = extract_thresholds(policy, params, k_th)
    except ThresholdExtractionError as exc:
        report.extraction_error = str(exc)
    else:
        report.thresholds = tables
        report.reconstruction_mismatches = len(algorithm1_policy(tables).differences(policy))
    return report
