"""Pure-Python/numpy versions of the compiled kernels (same signatures).

Used when the extension is not built or when ``HETNET_POLICY_BACKEND=python``.
The arithmetic order matches the compiled code, so results agree bit for bit
on the simulator and to the last ulp or so on value iteration.
"""
from __future__ import annotations

import numpy as np


def _q_best(phat, succ, fhat, cost, beta, v):
    u = np.append(fhat + v, -np.inf)
    q = u[succ] - beta * cost  # succ == -1 picks the -inf sentinel
    best = q.max(axis=2)
    return np.where(phat > 0.0, phat * np.where(np.isfinite(best), best, 0.0), 0.0)


def bellman_sweep(phat, selfp, succ, fhat, cost, beta, v):
    v = np.asarray(v, dtype=np.float64)
    terms = _q_best(phat, succ, fhat, cost, beta, v)
    acc = np.zeros(v.shape[0])
    for e in range(5):  # same summation order as the compiled sweep
        acc = acc + terms[:, e]
    return acc + selfp * (fhat + v)


def relative_via(phat, selfp, succ, fhat, cost, beta, v0, ref, delta, tol, max_iters, span_trace):
    v = np.array(v0, dtype=np.float64, copy=True)
    span, mid, it, bad = np.inf, 0.0, 0, -1
    converged = False
    while it < max_iters:
        new = bellman_sweep(phat, selfp, succ, fhat, cost, beta, v)
        it += 1
        finite = np.isfinite(new)
        if not finite.all():
            bad = int(np.argmin(finite))
            break
        d = new - v
        lo, hi = float(d.min()), float(d.max())
        span = hi - lo
        mid = 0.5 * (hi + lo)
        if it - 1 < len(span_trace):
            span_trace[it - 1] = span
        v = new - new[ref]
        if span <= tol * max(1.0, abs(mid / delta)):
            converged = True
            break
    return v, mid, span, it, converged, bad


def simulate_chunk(cumrates, vtot, f, next_low, next_high, block_low, block_high,
                   p, state, exp_draws, event_u, decision_u, skip):
    s = int(state)
    time = area = 0.0
    arrivals = blocked = recorded = 0
    bad_s = bad_e = -1
    n = len(vtot)
    # plain Python scalars keep this loop tolerable
    cum = cumrates.tolist()
    vt = vtot.tolist()
    ff = f.tolist()
    nl, nh = next_low.tolist(), next_high.tolist()
    bl, bh = block_low.tolist(), block_high.tolist()
    for h_raw, ue, ud in zip(exp_draws.tolist(), event_u.tolist(), decision_u.tolist()):
        v = vt[s]
        h = h_raw / v
        x = ue * v
        row = cum[s]
        l = 0
        while l < 4 and x >= row[l]:
            l += 1
        use_low = ud < p
        nxt = nl[s][l] if use_low else nh[s][l]
        if nxt < 0 or nxt >= n:
            bad_s, bad_e = s, l
            break
        if skip <= 0:
            time += h
            area += ff[s] * h
            recorded += 1
            if l == 0:
                arrivals += 1
                blocked += bl[s] if use_low else bh[s]
        else:
            skip -= 1
        s = nxt
    return s, skip, time, area, arrivals, blocked, recorded, bad_s, bad_e
