"""Compiled inner loop of the event-driven simulator.

Queue, served and arrival totals are carried as compensated (hi, lo) float
pairs so that the work-conservation identity survives millions of events.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _two_sum_add(hi, lo, x):
    s = hi + x
    bp = s - hi
    err = (hi - (s - bp)) + (x - bp)
    return s, lo + err


@numba.njit(cache=True)
def advance(
    t,
    t_end,
    state,
    q_hi,
    q_lo,
    served_hi,
    served_lo,
    arr_hi,
    arr_lo,
    offered,
    occupation,
    vectors,
    ptr,
    dst,
    edge_rates,
    exit_rates,
    arr_times,
    arr_amounts,
    arr_pos,
    unif,
    upos,
    jumps,
    max_jumps,
):
    """Advance the CTMC with fluid queues from ``t`` towards ``t_end``.

    Arrays ``q_*``, ``served_*``, ``arr_*``, ``offered`` and ``occupation``
    are updated in place.  Jumps are sampled from the exit rate of the
    current state (null clock ticks are skipped).  Arrivals in
    ``arr_amounts[k]`` land at ``arr_times[k]``.

    Returns ``(t, state, arr_pos, upos, jumps, status)`` where status 0 means
    ``t_end`` was reached, 1 the uniform buffer ran out and 2 the jump
    budget was spent.
    """
    n = vectors.shape[1]
    m = arr_times.shape[0]
    nu = unif.shape[0]
    status = 0
    while True:
        if arr_pos < m:
            next_arr = arr_times[arr_pos]
        else:
            next_arr = np.inf
        stop = t_end if t_end < next_arr else next_arr
        ex = exit_rates[state]
        if ex > 0.0:
            if upos + 2 > nu:
                status = 1
                break
            dt = -math.log(unif[upos]) / ex
            upos += 1
        else:
            dt = np.inf
        if t + dt >= stop:
            d = stop - t
            jumped = False
        else:
            d = dt
            jumped = True
        # piecewise-exact service over [t, t + d)
        if d > 0.0:
            occupation[state] += d
            for i in range(n):
                rate = vectors[state, i]
                if rate <= 0.0:
                    continue
                offered[i] += rate * d
                qv = q_hi[i] + q_lo[i]
                if qv <= 0.0:
                    continue
                cap = rate * d
                if cap >= qv:
                    served_hi[i], served_lo[i] = _two_sum_add(served_hi[i], served_lo[i], q_hi[i])
                    served_hi[i], served_lo[i] = _two_sum_add(served_hi[i], served_lo[i], q_lo[i])
                    q_hi[i] = 0.0
                    q_lo[i] = 0.0
                else:
                    q_hi[i], q_lo[i] = _two_sum_add(q_hi[i], q_lo[i], -cap)
                    served_hi[i], served_lo[i] = _two_sum_add(served_hi[i], served_lo[i], cap)
        if not jumped:
            t = stop
            if stop == next_arr:
                for i in range(n):
                    a = arr_amounts[arr_pos, i]
                    if a != 0.0:
                        q_hi[i], q_lo[i] = _two_sum_add(q_hi[i], q_lo[i], a)
                        arr_hi[i], arr_lo[i] = _two_sum_add(arr_hi[i], arr_lo[i], a)
                arr_pos += 1
                continue
            break
        t = t + d
        u = unif[upos] * ex
        upos += 1
        acc = 0.0
        nxt = dst[ptr[state + 1] - 1]
        for k in range(ptr[state], ptr[state + 1]):
            acc += edge_rates[k]
            if u < acc:
                nxt = dst[k]
                break
        state = nxt
        jumps += 1
        if jumps >= max_jumps:
            status = 2
            break
    return t, state, arr_pos, upos, jumps, status
