import numpy as np
import pytest
from _oracles import small_params

from hetnet_policy.model import ActionKind, EventKind, build_tables, data_threshold
from hetnet_policy.policy import Policy, on_the_spot_policy
from hetnet_policy.solver import SolverConfig, solve_at_beta, solve_unconstrained
from hetnet_policy.structure import (
    ThresholdExtractionError,
    algorithm1_action,
    algorithm1_policy,
    extract_thresholds,
    verify_data_rules,
    verify_structure,
    verify_value_structure,
    verify_voice_rules,
)

A, E = ActionKind, EventKind

# va_lc for the reference instance, rows j = 0..C, columns k = 0..W
REF_VA_LC = [[9, 9, 9, 9, 9, 9, 9, 9], [9, 8, 8, 8, 8, 8, 8, 8], [8, 7, 7, 7, 7, 7, 7, 7],
             [7, 6, 6, 6, 6, 6, 6, 6], [6, 6, 5, 5, 5, 5, 5, 5], [5, 5, 4, 4, 4, 4, 4, 4],
             [4, 4, 3, 3, 3, 3, 3, 3], [3, 3, 3, 2, 2, 2, 2, 2], [2, 2, 2, 1, 1, 1, 1, 1],
             [1, 1, 1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0, 0, 0]]
REF_VA_C = [10, 0, 0, 0, 0, 0, 0, 0]


def bumpy_params():
    """WiFi increments rise again after the threshold: the data condition fails."""
    return small_params(3, 3, rld=1.0, table=[(1, 3.0), (2, 1.4), (3, 1.3), (4, 1.0)])


def test_reference_thresholds_frozen(ref_solution, ref_params):
    t = extract_thresholds(ref_solution.policy, ref_params)
    assert t.k_th == 1
    assert t.va_lc.tolist() == REF_VA_LC
    assert t.to_dict()["va_c"] == REF_VA_C
    assert algorithm1_policy(t).same_as(ref_solution.policy)


def test_reference_policy_satisfies_every_check(ref_solution, ref_params):
    report = verify_structure(ref_solution.policy, ref_solution.value, ref_params)
    assert report.threshold_condition_valid and report.passed
    assert report.reconstruction_mismatches == 0
    for name, r in report.checks.items():
        assert r.passed, name
    assert report.checks["data_to_lte"].checked > 0
    assert "threshold reconstruction mismatches: 0" in report.summary()


def _tradeoff_params():
    return small_params(3, 4, lv=0.3, ld=0.6, rlv=0.02, rld=5.0,
                        table=[(1, 30.0), (2, 16.0), (3, 10.0), (4, 7.0), (5, 5.0)])


@pytest.mark.parametrize("beta", [5.0, 60.0])
def test_small_instances_are_threshold_type(beta):
    res = solve_at_beta(_tradeoff_params(), beta, SolverConfig(via_tolerance=1e-12))
    report = verify_structure(res.policy, res.value)
    assert report.passed, report.summary()
    assert report.reconstruction_mismatches == 0


def test_block_monotone_in_j_can_break_when_offload_appears():
    """With no LTE data user there is no offload accept, so blocking at
    (1, 0, 0) does not carry over to (1, 1, 0) where A4 is available."""
    res = solve_at_beta(_tradeoff_params(), 0.0, SolverConfig(via_tolerance=1e-12))
    report = verify_structure(res.policy, res.value)
    assert report.hard_failures == ["voice_block_monotone"]
    assert report.checks["voice_block_monotone"].violations == [((1, 1, 0), E.E1, A.A1, A.A4)]
    assert report.reconstruction_mismatches == 0


def test_mutated_policy_is_caught(ref_solution, ref_params):
    t = build_tables(ref_params)
    acts = ref_solution.policy.actions.copy()
    s = t.space.index((2, 3, 0))  # k < k_th: data should go to WiFi
    acts[s, E.E2.index] = A.A2
    bad = Policy(ref_params, acts)
    rep = verify_data_rules(bad)
    v = rep.checks["data_to_wifi"].violations
    assert v == [((2, 3, 0), E.E2, A.A3, A.A2)]
    assert "data_to_wifi" in rep.hard_failures


def test_non_threshold_row_raises(ref_solution, ref_params):
    t = build_tables(ref_params)
    acts = ref_solution.policy.actions.copy()
    acts[t.space.index((3, 2, 4)), E.E1.index] = A.A1
    with pytest.raises(ThresholdExtractionError) as info:
        extract_thresholds(Policy(ref_params, acts))
    assert info.value.row == "va_lc(j=2, k=4)"
    assert tuple(info.value.blocking) == (3, 2, 4)
    report = verify_structure(Policy(ref_params, acts))
    assert report.extraction_error and report.reconstruction_mismatches is None


def test_voice_rule_flags_wrong_accept_action(ref_solution, ref_params):
    t = build_tables(ref_params)
    acts = ref_solution.policy.actions.copy()
    acts[t.space.index((1, 2, 0)), E.E1.index] = A.A2  # below k_th the offload accept is optimal
    rep = verify_voice_rules(Policy(ref_params, acts))
    assert not rep.checks["voice_accept_action"].passed


def test_failed_threshold_condition_makes_checks_informational():
    p = bumpy_params()
    k_th, valid = data_threshold(p)
    assert (k_th, valid) == (1, False)
    res = solve_unconstrained(p, SolverConfig(via_tolerance=1e-12))
    report = verify_structure(res.policy, res.value)
    assert not report.threshold_condition_valid
    assert all(r.informational for r in report.checks.values())
    assert report.hard_failures == []
    assert "FAILS" in report.summary()


def test_value_checks_detect_convexity():
    p = small_params(3, 2)
    n = build_tables(p).n
    i = build_tables(p).space.i
    vf = np.asarray(i, dtype=float) ** 2  # strictly convex in i
    rep = verify_value_structure(vf, params=p)
    worst, tol, info = rep.value_residuals["concave_i"]
    assert worst == pytest.approx(2.0) and worst > tol and not info
    assert "concave_i" in rep.hard_failures
    assert len(vf) == n


def test_algorithm1_fallbacks(ref_solution, ref_params):
    t = extract_thresholds(ref_solution.policy, ref_params)
    # no LTE data user: the offload accept falls back to plain accept
    assert algorithm1_action(t, (0, 0, 0), E.E1) is A.A2
    # below k_th with a movable LTE data user: offload accept
    assert algorithm1_action(t, (0, 2, 0), E.E1) is A.A4
    assert algorithm1_action(t, (0, 0, 0), E.E2) is A.A3
    assert algorithm1_action(t, (0, 0, 3), E.E2) is A.A2
    assert algorithm1_action(t, (0, 10, 3), E.E2) is A.A3
    assert algorithm1_action(t, (1, 1, 3), E.E3) is A.A5
    assert algorithm1_action(t, (1, 1, 1), E.E5) is A.A5


def test_on_the_spot_is_not_optimal_structure(ref_params):
    rep = verify_data_rules(on_the_spot_policy(ref_params))
    assert not rep.passed
