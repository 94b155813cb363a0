import subprocess
import sys

import numpy as np
import pytest
from _oracles import small_params

from hetnet_policy import kernels
from hetnet_policy.policy import maximal_acceptance_policy, on_the_spot_policy
from hetnet_policy.simulator import PolicyImpl, SimConfig, simulate
from hetnet_policy.solver import _kernel_inputs, uniformize

BACKENDS = kernels.backends()
needs_compiled = pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled extension not built")


def test_backend_flag():
    assert kernels.BACKEND in ("compiled", "python")
    assert "python" in BACKENDS


def test_env_var_forces_fallback():
    code = "from hetnet_policy import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"HETNET_POLICY_BACKEND": "python", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    bad = subprocess.run([sys.executable, "-c", code], env={"HETNET_POLICY_BACKEND": "gpu", "PATH": ""},
                         capture_output=True, text=True)
    assert bad.returncode != 0


@needs_compiled
@pytest.mark.parametrize("beta", [0.0, 7.5])
def test_via_parity(beta):
    p = small_params(3, 3)
    um = uniformize(p)
    args = _kernel_inputs(um)
    outs = []
    for name in ("compiled", "python"):
        trace = np.full(5000, np.nan)
        v, mid, span, it, conv, bad = BACKENDS[name].relative_via(
            *args, beta, np.zeros(um.n), um.ref_index, um.delta, 1e-11, 5000, trace)
        outs.append((np.asarray(v), mid, span, it, conv, bad, trace[:it]))
    a, b = outs
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13, atol=1e-12)
    assert a[3] == b[3] and a[4] == b[4] and a[5] == b[5] == -1
    assert a[1] == pytest.approx(b[1], rel=1e-13)
    np.testing.assert_allclose(a[6], b[6], rtol=1e-9, atol=1e-15)


@needs_compiled
def test_bellman_sweep_parity():
    p = small_params(2, 3)
    um = uniformize(p)
    v = np.random.default_rng(3).normal(size=um.n)
    a = BACKENDS["compiled"].bellman_sweep(*_kernel_inputs(um), 2.0, v)
    b = BACKENDS["python"].bellman_sweep(*_kernel_inputs(um), 2.0, v)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-14)


@needs_compiled
def test_simulation_parity_bit_identical():
    p = small_params(3, 2)
    impl = PolicyImpl("mix", on_the_spot_policy(p), maximal_acceptance_policy(p, 1), 0.4)
    cfg = SimConfig(horizon_events=20000, warmup_events=1000, replications=3, chunk_events=777)
    a = simulate(impl, p, cfg, backend=BACKENDS["compiled"])
    b = simulate(impl, p, cfg, backend=BACKENDS["python"])
    np.testing.assert_array_equal(a.blocking, b.blocking)
    np.testing.assert_array_equal(a.voice_arrivals, b.voice_arrivals)
    np.testing.assert_allclose(a.throughput, b.throughput, rtol=1e-12)
    np.testing.assert_allclose(a.sim_time, b.sim_time, rtol=1e-12)
