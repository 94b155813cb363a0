import numpy as np
import pytest
from _oracles import occupation_lp, small_params

from hetnet_policy.model import EMPTY, ActionKind, EventKind, enumerate_states
from hetnet_policy.oracle import evaluate_policy_exact
from hetnet_policy.policy import maximal_acceptance_policy
from hetnet_policy.solver import (
    ConvergenceError,
    InfeasibleConstraintError,
    SolverConfig,
    ValueFunction,
    bellman_update,
    greedy_policy,
    q_values,
    solve_at_beta,
    solve_cmdp,
    solve_unconstrained,
    uniformize,
)


def tradeoff_params():
    """Small instance where blocking voice pays off for throughput."""
    return small_params(3, 3, lv=0.3, ld=0.6, rlv=0.02, rld=5.0,
                        table=[(1, 30.0), (2, 16.0), (3, 10.0), (4, 7.0)])


def test_uniformization_constants():
    p = small_params(C=3, W=2)
    um = uniformize(p)
    assert um.delta == 1.0 / (p.lambda_v + p.lambda_d + 3 * p.mu_v + 5 * p.mu_d)
    assert um.self_loop.min() >= 0.0
    np.testing.assert_allclose(um.event_prob.sum(axis=1) + um.self_loop, 1.0, rtol=0, atol=1e-15)
    assert um.tables.space.states[um.ref_index] == EMPTY


def test_q_values_mark_inadmissible_actions():
    p = small_params()
    um = uniformize(p)
    q = q_values(um, np.zeros(um.n), 0.0)
    assert np.all(np.isneginf(q[um.tables.succ < 0]))
    assert np.all(np.isfinite(q[um.tables.succ >= 0]))


def test_bellman_update_iterates_to_solution():
    p = small_params()
    um = uniformize(p)
    vf = ValueFunction(np.zeros(um.n), 0.0, 0, np.inf, p)
    spans = []
    for _ in range(400):
        vf, _ = bellman_update(vf, um, 0.0)
        spans.append(vf.span_residual)
    res = solve_unconstrained(p, SolverConfig(via_tolerance=1e-12))
    assert spans[-1] < 1e-6 * spans[0]
    assert vf.g == pytest.approx(res.g, rel=1e-8)
    assert vf[EMPTY] == 0.0


def test_gain_equals_exact_throughput():
    p = small_params(C=3, W=3)
    res = solve_unconstrained(p, SolverConfig(via_tolerance=1e-12))
    ev = evaluate_policy_exact(res.policy, p)
    assert res.g == pytest.approx(ev.throughput, rel=1e-9)
    assert res.converged and res.iterations == len(res.span_trace)


@pytest.mark.parametrize("beta", [0.0, 1.0, 25.0])
def test_gain_matches_lp_optimum(beta):
    p = tradeoff_params()
    res = solve_at_beta(p, beta, SolverConfig(via_tolerance=1e-12))
    assert res.g == pytest.approx(occupation_lp(p, beta)[0], rel=1e-9)


def test_reference_instance_frozen(ref_solution):
    assert ref_solution.g == pytest.approx(10.438081449975, rel=1e-10)
    ev = evaluate_policy_exact(ref_solution.policy)
    assert ev.throughput == pytest.approx(10.438081450066, rel=1e-10)
    assert ev.blocking == pytest.approx(0.2801783544844882, rel=1e-9)


def test_convergence_error_reports_span():
    with pytest.raises(ConvergenceError) as info:
        solve_unconstrained(small_params(), SolverConfig(via_max_iters=3))
    assert info.value.span_residual > 0


def test_warm_start_gives_same_policy():
    p = tradeoff_params()
    cold = solve_at_beta(p, 2.0)
    warm = solve_at_beta(p, 2.1, v0=cold.value.v)
    again = solve_at_beta(p, 2.1)
    assert warm.policy.same_as(again.policy)
    assert warm.iterations < again.iterations


def test_tie_break_direction():
    p = small_params()
    um = uniformize(p)
    # with v = 0 and beta = 0 only the post-decision throughput matters, so
    # many actions tie on departures from states where A1 and A5 give equal f
    lo = greedy_policy(um, np.zeros(um.n), 0.0, "lowest")
    hi = greedy_policy(um, np.zeros(um.n), 0.0, "highest")
    assert np.all(lo.actions <= hi.actions)
    with pytest.raises(ValueError):
        SolverConfig(tie_break="middle")


def test_blocking_non_increasing_in_beta():
    p = tradeoff_params()
    Bs = [evaluate_policy_exact(solve_at_beta(p, b).policy, p).blocking for b in (0, 0.5, 2, 8, 30, 100)]
    assert all(b1 <= b0 + 1e-12 for b0, b1 in zip(Bs, Bs[1:]))


def test_cmdp_slack_returns_unconstrained():
    p = tradeoff_params()
    res = solve_cmdp(p, 0.95)
    assert res.status == "slack" and res.p == 1.0 and res.beta_star == 0.0
    assert res.policy.low.same_as(solve_unconstrained(p).policy)


@pytest.mark.parametrize("B_max", [0.48052676604856137, 0.14173477118281694])
def test_cmdp_binding_meets_bound_and_lp(B_max):
    p = tradeoff_params()
    res = solve_cmdp(p, B_max)
    assert res.status == "binding"
    assert res.blocking == pytest.approx(B_max, abs=1e-12)
    assert 0.0 < res.p < 1.0
    assert res.B_low > B_max > res.B_high
    lp_value, _, _ = occupation_lp(p, B_max=B_max)
    assert res.throughput == pytest.approx(lp_value, rel=1e-9)
    assert res.throughput <= res.unconstrained_throughput
    assert not res.monotonicity_violations


def test_cmdp_frozen_values():
    res = solve_cmdp(tradeoff_params(), 0.48052676604856137)
    assert res.beta_star == pytest.approx(1.3331742615331033, rel=1e-6)
    assert res.p == pytest.approx(0.5951839635694909, rel=1e-6)
    assert res.p_linear == pytest.approx(0.5432267065263876, rel=1e-6)
    assert res.throughput == pytest.approx(23.33891263009074, rel=1e-10)


def test_cmdp_linear_mixing_when_refinement_disabled():
    p = tradeoff_params()
    res = solve_cmdp(p, 0.48052676604856137, SolverConfig(refine_mixing=False))
    assert res.p == res.p_linear
    assert abs(res.blocking - 0.48052676604856137) < 0.05


def test_cmdp_infeasible_carries_minimum():
    p = tradeoff_params()
    B_min = evaluate_policy_exact(maximal_acceptance_policy(p, 1), p).blocking
    with pytest.raises(InfeasibleConstraintError) as info:
        solve_cmdp(p, 0.5 * B_min)
    err = info.value
    assert err.B_min == pytest.approx(B_min, rel=1e-12)
    assert evaluate_policy_exact(err.policy, p).blocking == pytest.approx(err.B_min, rel=1e-12)
    assert occupation_lp(p, B_max=0.5 * B_min) is None


def test_cmdp_rejects_bad_bound():
    with pytest.raises(ValueError):
        solve_cmdp(small_params(), 0.0)


def test_voice_never_blocked_with_lte_room_at_high_beta():
    p = tradeoff_params()
    pol = solve_at_beta(p, 1e4).policy
    blocked = [s for s in enumerate_states(p) if s.i + s.j < p.C and pol(s, EventKind.E1) is ActionKind.A1]
    assert blocked == []
