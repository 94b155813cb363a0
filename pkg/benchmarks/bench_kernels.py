"""Compare the compiled and pure-Python kernels on the reference instance.

    python benchmarks/bench_kernels.py [--events N] [--repeat R]

Reports wall time per value-iteration solve and per simulated event for each
available backend, and checks that both give the same numbers.
"""
import argparse
import time

import numpy as np

from hetnet_policy import kernels
from hetnet_policy.config import ModelConfig
from hetnet_policy.simulator import SimConfig, policy_on_the_spot, simulate
from hetnet_policy.solver import _kernel_inputs, uniformize


def bench_via(backend, um, repeat):
    args = _kernel_inputs(um)
    best = np.inf
    for _ in range(repeat):
        trace = np.empty(200_000)
        t0 = time.perf_counter()
        v, mid, span, it, conv, bad = backend.relative_via(
            *args, 0.0, np.zeros(um.n), um.ref_index, um.delta, 1e-9, 200_000, trace)
        best = min(best, time.perf_counter() - t0)
    return best, int(it), mid / um.delta


def bench_sim(backend, params, events, repeat):
    cfg = SimConfig(horizon_events=events, warmup_events=events // 10, replications=1)
    impl = policy_on_the_spot(params)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        m = simulate(impl, params, cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, m.blocking_fraction


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    params = ModelConfig().build()
    um = uniformize(params)
    backends = kernels.backends()
    print(f"reference instance: {um.n} states; backends: {', '.join(backends)}")
    results = {}
    for name, backend in backends.items():
        t_via, iters, g = bench_via(backend, um, args.repeat)
        t_sim, blk = bench_sim(backend, params, args.events, args.repeat)
        results[name] = (t_via, t_sim, g, blk)
        print(f"{name:>9}: VIA {t_via * 1e3:9.1f} ms ({iters} sweeps, g={g:.9f})   "
              f"simulation {t_sim / args.events * 1e9:8.1f} ns/event (blocking {blk:.6f})")
    if "compiled" in results:
        c, p = results["compiled"], results["python"]
        print(f"speed-up: VIA x{p[0] / c[0]:.1f}, simulation x{p[1] / c[1]:.1f}")
        print("results agree:", bool(np.isclose(c[2], p[2], rtol=1e-12) and c[3] == p[3]))


if __name__ == "__main__":
    main()
