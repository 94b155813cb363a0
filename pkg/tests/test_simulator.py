import numpy as np
import pytest
from _oracles import small_params

from hetnet_policy.model import ActionKind, EventKind, ValidationError
from hetnet_policy.oracle import erlang_b, evaluate_policy_exact
from hetnet_policy.policy import RandomizedPolicy, maximal_acceptance_policy, on_the_spot_policy
from hetnet_policy.simulator import (
    PolicyImpl,
    SimConfig,
    as_policy_impl,
    policy_algorithm1,
    policy_on_the_spot,
    simulate,
)
from hetnet_policy.solver import solve_unconstrained
from hetnet_policy.structure import extract_thresholds

SMALL = SimConfig(horizon_events=60000, warmup_events=5000, replications=8)


def test_config_validation():
    for kw in ({"warmup_events": -1}, {"horizon_events": 10, "warmup_events": 10}, {"replications": 0},
               {"rng": "mt19937"}, {"chunk_events": 0}):
        with pytest.raises(ValidationError):
            SimConfig(**kw)


def test_streams_are_independent_and_reproducible():
    cfg = SimConfig()
    a = cfg.stream(0, "event").random(5)
    assert np.array_equal(a, cfg.stream(0, "event").random(5))
    assert not np.array_equal(a, cfg.stream(1, "event").random(5))
    assert not np.array_equal(a, cfg.stream(0, "decision").random(5))
    assert not np.array_equal(a, cfg.replace(base_seed=1).stream(0, "event").random(5))


def test_deterministic_and_chunk_invariant():
    p = small_params()
    impl = policy_on_the_spot(p)
    a = simulate(impl, p, SMALL)
    b = simulate(impl, p, SMALL.replace(chunk_events=1001))
    np.testing.assert_array_equal(a.blocking, b.blocking)
    np.testing.assert_allclose(a.throughput, b.throughput, rtol=1e-12)


def test_frozen_seed_zero():
    p = small_params()
    m = simulate(policy_on_the_spot(p), p, SimConfig(horizon_events=20000, warmup_events=1000, replications=2))
    np.testing.assert_array_equal(m.voice_arrivals, FROZEN_ARRIVALS)
    np.testing.assert_array_equal(m.voice_blocked, FROZEN_BLOCKED)


FROZEN_ARRIVALS = [4363, 4330]
FROZEN_BLOCKED = [590, 537]


def test_common_random_numbers_across_policies():
    # the event stream does not depend on the policy, so the first decisions agree
    p = small_params()
    a = simulate(policy_on_the_spot(p), p, SMALL)
    b = simulate(PolicyImpl("mix", on_the_spot_policy(p), on_the_spot_policy(p), 0.5), p, SMALL)
    np.testing.assert_array_equal(a.blocking, b.blocking)


def test_on_the_spot_blocking_matches_erlang():
    p = small_params(C=3, W=2)
    m = simulate(policy_on_the_spot(p), p, SimConfig(horizon_events=200000, warmup_events=10000, replications=10))
    B = erlang_b(p.C, p.lambda_v / p.mu_v)
    assert abs(m.blocking_fraction - B) <= 4 * m.blocking_stderr
    lo, hi = m.blocking_ci
    assert lo < m.blocking_fraction < hi
    assert hi - lo == pytest.approx(2 * 1.96 * m.blocking_stderr)


def test_randomized_policy_matches_exact_mixture():
    p = small_params(C=3, W=2)
    rp = RandomizedPolicy(on_the_spot_policy(p), maximal_acceptance_policy(p, 1), 0.35)
    ev = evaluate_policy_exact(rp, p)
    m = simulate(rp, p, SimConfig(horizon_events=200000, warmup_events=10000, replications=10))
    assert abs(m.blocking_fraction - ev.blocking) <= 4 * m.blocking_stderr
    assert abs(m.mean_throughput_mbps - ev.throughput) <= 4 * m.throughput_stderr


def test_algorithm1_impl_equals_solved_policy():
    p = small_params(C=3, W=3, rld=2.5)
    res = solve_unconstrained(p)
    impl = policy_algorithm1(extract_thresholds(res.policy, p))
    assert impl.low.same_as(res.policy)
    a = simulate(impl, p, SMALL)
    b = simulate(res.policy, p, SMALL)
    np.testing.assert_array_equal(a.blocking, b.blocking)


def test_function_policy_is_tabulated():
    p = small_params()

    def greedy(s, e):
        if e is EventKind.E1:
            return ActionKind.A2 if s.i + s.j < p.C else ActionKind.A1
        if e is EventKind.E2:
            return ActionKind.A2 if s.i + s.j < p.C else (ActionKind.A3 if s.k < p.W else ActionKind.A1)
        return ActionKind.A1

    impl = as_policy_impl(greedy, p)
    assert impl.name == "greedy"
    with pytest.raises(ValueError):
        as_policy_impl(greedy)
    with pytest.raises(TypeError):
        as_policy_impl(42)
    with pytest.raises(ValueError):
        simulate(policy_on_the_spot(small_params(C=2)), p, SMALL)


def test_metrics_export():
    p = small_params()
    m = simulate(policy_on_the_spot(p), p, SMALL.replace(replications=3))
    d = m.to_dict()
    assert d["replications"] == 3 and d["policy"] == "on_the_spot"
    lines = m.replications_csv().splitlines()
    assert lines[0].startswith("replication,blocking") and len(lines) == 4
    assert np.all(m.voice_blocked <= m.voice_arrivals)


def test_ci_width_scales_with_root_horizon(ref_params):
    """CI width falls like 1/sqrt(events): doubling the post-warm-up horizon
    shrinks it by 1/sqrt(2), quadrupling halves it (each within 30%)."""
    impl = policy_on_the_spot(ref_params)
    warm, n = 10_000, 250_000
    widths = {}
    for mult in (1, 2, 4):
        cfg = SimConfig(horizon_events=warm + mult * n, warmup_events=warm, replications=20, base_seed=7)
        lo, hi = simulate(impl, ref_params, cfg).blocking_ci
        widths[mult] = hi - lo
    r2, r4 = widths[2] / widths[1], widths[4] / widths[1]
    print(f"CI width ratios: x2 -> {r2:.3f} (expect 0.707), x4 -> {r4:.3f} (expect 0.5)")
    assert abs(r2 / (1 / np.sqrt(2)) - 1) <= 0.3
    assert abs(r4 / 0.5 - 1) <= 0.3
