# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: relative value iteration and the event-driven simulator.

Both functions mirror ``_fallback`` operation for operation so the two
backends give bit-identical results on the same inputs.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, isfinite

cnp.import_array()


cdef inline double _sweep(const double[:, ::1] phat, const double[::1] selfp,
                          const int[:, :, ::1] succ, const double[::1] fhat,
                          const double[:, :, ::1] cost, double beta,
                          const double[::1] v, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t s, e, a
    cdef int t
    cdef double acc, best, q, pe
    for s in range(n):
        acc = 0.0
        for e in range(5):
            pe = phat[s, e]
            if pe > 0.0:
                best = -INFINITY
                for a in range(5):
                    t = succ[s, e, a]
                    if t >= 0:
                        q = fhat[t] + v[t] - beta * cost[s, e, a]
                        if q > best:
                            best = q
                acc += pe * best
        acc += selfp[s] * (fhat[s] + v[s])
        out[s] = acc
    return 0.0


def bellman_sweep(const double[:, ::1] phat, const double[::1] selfp,
                  const int[:, :, ::1] succ, const double[::1] fhat,
                  const double[:, :, ::1] cost, double beta, const double[::1] v):
    """One unshifted Bellman sweep; returns the new value array."""
    out = np.empty(v.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        _sweep(phat, selfp, succ, fhat, cost, beta, v, o)
    return out


def relative_via(const double[:, ::1] phat, const double[::1] selfp,
                 const int[:, :, ::1] succ, const double[::1] fhat,
                 const double[:, :, ::1] cost, double beta, double[::1] v0,
                 Py_ssize_t ref, double delta, double tol, Py_ssize_t max_iters,
                 double[::1] span_trace):
    """Iterate until span(v_{n+1} - v_n) <= tol * max(1, |g|).

    Returns ``(v, mid, span, iterations, converged, bad_state)`` where ``mid``
    is the midpoint of the last difference (the per-step gain) and
    ``bad_state`` is the first non-finite state index or -1.
    """
    cdef Py_ssize_t n = v0.shape[0]
    v_arr = np.array(v0, dtype=np.float64, copy=True)
    new_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef double[::1] nw = new_arr
    cdef double lo, hi, d, shift, span = INFINITY, mid = 0.0, g
    cdef Py_ssize_t it = 0, s, bad = -1
    cdef bint converged = False
    cdef Py_ssize_t trace_len = span_trace.shape[0]
    with nogil:
        while it < max_iters:
            _sweep(phat, selfp, succ, fhat, cost, beta, v, nw)
            it += 1
            lo = INFINITY
            hi = -INFINITY
            for s in range(n):
                if not isfinite(nw[s]):
                    bad = s
                    break
                d = nw[s] - v[s]
                if d < lo:
                    lo = d
                if d > hi:
                    hi = d
            if bad >= 0:
                break
            span = hi - lo
            mid = 0.5 * (hi + lo)
            if it - 1 < trace_len:
                span_trace[it - 1] = span
            shift = nw[ref]
            for s in range(n):
                v[s] = nw[s] - shift
            g = mid / delta
            if g < 0:
                g = -g
            if g < 1.0:
                g = 1.0
            if span <= tol * g:
                converged = True
                break
    return v_arr, mid, span, it, bool(converged), bad


def simulate_chunk(const double[:, ::1] cumrates, const double[::1] vtot, const double[::1] f,
                   const long long[:, ::1] next_low, const long long[:, ::1] next_high,
                   const unsigned char[::1] block_low, const unsigned char[::1] block_high,
                   double p, Py_ssize_t state, const double[::1] exp_draws,
                   const double[::1] event_u, const double[::1] decision_u, Py_ssize_t skip):
    """Advance the chain by ``len(exp_draws)`` events.

    The first ``skip`` events are warm-up: they move the state but are not
    recorded.  Returns ``(state, skip_left, time, area, voice_arrivals,
    voice_blocked, recorded_events, bad_state, bad_event)``; the last two are
    -1 unless a successor lookup failed.
    """
    cdef Py_ssize_t m = exp_draws.shape[0]
    cdef Py_ssize_t n = vtot.shape[0]
    cdef Py_ssize_t idx, l, nxt
    cdef Py_ssize_t s = state
    cdef double time = 0.0, area = 0.0, h, x, v
    cdef long long arrivals = 0, blocked = 0, recorded = 0
    cdef Py_ssize_t bad_s = -1, bad_e = -1
    cdef bint use_low, rec
    with nogil:
        for idx in range(m):
            v = vtot[s]
            h = exp_draws[idx] / v
            x = event_u[idx] * v
            l = 0
            while l < 4 and x >= cumrates[s, l]:
                l += 1
            use_low = decision_u[idx] < p
            if use_low:
                nxt = next_low[s, l]
            else:
                nxt = next_high[s, l]
            if nxt < 0 or nxt >= n:
                bad_s = s
                bad_e = l
                break
            rec = skip <= 0
            if rec:
                time += h
                area += f[s] * h
                recorded += 1
                if l == 0:
                    arrivals += 1
                    if use_low:
                        blocked += block_low[s]
                    else:
                        blocked += block_high[s]
            else:
                skip -= 1
            s = nxt
    return s, skip, time, area, arrivals, blocked, recorded, bad_s, bad_e
