"""Compiled per-path walker.

Each path draws from its own SplitMix64 stream keyed by ``(seed, path, stream)``,
so results do not depend on batching or on the number of worker threads.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
TWO_M53 = 2.0**-53

# vertex classes
TRAP, HOLD, INSTANT = 0, 1, 2
# stop codes
CENSORED, DIED, STOP_VERTEX, STOP_TARGET, TRAPPED = 0, 1, 2, 3, 4
# barrier kinds
B_VERTEX0, B_VERTEX1, B_LEVEL, B_TARGET, B_NONE = 0, 1, 2, 3, 4
# event edge codes
EV_VERTEX, EV_CEMETERY = -1, -2


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> S30)) * MIX1
    z = (z ^ (z >> S27)) * MIX2
    return z ^ (z >> S31)


@njit(cache=True)
def stream_key(seed, path, stream):
    s = _mix(np.uint64(seed) + GOLDEN)
    s = _mix(s ^ (np.uint64(path) + GOLDEN))
    return _mix(s ^ (np.uint64(stream) * GOLDEN + GOLDEN))


@njit(cache=True, inline="always")
def _next(state):
    state[0] += GOLDEN
    return _mix(state[0])


@njit(cache=True, inline="always")
def _uniform(state):
    """Uniform on (0, 1]."""
    return (float(_next(state) >> S11) + 1.0) * TWO_M53


@njit(cache=True, inline="always")
def _normal(state):
    u1 = _uniform(state)
    u2 = _uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def uniforms(seed, path, stream, n):
    """First ``n`` uniforms of a stream (used to test the generator)."""
    state = np.empty(1, np.uint64)
    state[0] = stream_key(seed, path, stream)
    out = np.empty(n)
    for i in range(n):
        out[i] = _uniform(state)
    return out


@njit(cache=True, inline="always")
def _f_edge(f_tab, f_n, f_h, e, x):
    n = f_n[e]
    if n == 0:
        return 0.0
    k = x / f_h
    i = int(k)
    if i >= n - 1:
        return f_tab[e, n - 1]
    w = k - i
    return (1.0 - w) * f_tab[e, i] + w * f_tab[e, i + 1]


@njit(cache=True, inline="always")
def _disc_int(lam, t1, t2):
    """Integral of exp(-lam s) over [t1, t2]."""
    if lam == 0.0:
        return t2 - t1
    return math.exp(-lam * t1) * (-math.expm1(-lam * (t2 - t1))) / lam


@njit(cache=True)
def walk(
    edge_len, edge_v0, edge_v1,
    vclass, vrate, inc_ptr, inc_edge, inc_end, inc_p, p_stay, p_kill, stop_vertex,
    tgt_ptr, tgt_x, tgt_id,
    f_tab, f_n, f_h, f_v,
    lam, delta, dt_max, horizon, bridge,
    s_edge, s_x, s_vertex, t0, seed, path, stream, exclude,
    visits, record, rec_t, rec_e, rec_x, rec_v,
):
    state = np.empty(1, np.uint64)
    state[0] = stream_key(seed, path, stream)
    d2 = delta * delta
    t = t0
    integral = 0.0
    first_t = math.inf
    first_v = -1
    death_t = math.inf
    code = CENSORED
    stop_id = -1
    nrec = 0
    cap = rec_t.shape[0]
    overflow = False

    at_vertex = s_edge < 0
    v = s_vertex
    e = s_edge
    x = s_x
    if record:
        rec_t[0] = t
        rec_e[0] = EV_VERTEX if at_vertex else e
        rec_x[0] = 0.0 if at_vertex else x
        rec_v[0] = v if at_vertex else -1
        nrec = 1

    arrived = True  # count the start vertex as an arrival
    while True:
        if t >= horizon:
            code = CENSORED
            break
        if at_vertex:
            if arrived:
                visits[v] += 1
                arrived = False
                if first_v < 0:
                    first_v = v
                    first_t = t
                if stop_vertex[v] and v != exclude:
                    code = STOP_VERTEX
                    stop_id = v
                    break
            fv = f_v[v]
            cls = vclass[v]
            if cls == TRAP:
                if lam > 0.0:
                    integral += fv * math.exp(-lam * t) / lam
                else:
                    integral += fv * (horizon - t)
                code = TRAPPED
                stop_id = v
                break
            if cls == HOLD:
                tau = -math.log(_uniform(state)) / vrate[v]
                if t + tau >= horizon:
                    integral += fv * _disc_int(lam, t, horizon)
                    t = horizon
                    code = CENSORED
                    break
                integral += fv * _disc_int(lam, t, t + tau)
                t += tau
                death_t = t
                code = DIED
                break
            # instantaneous vertex: geometric batch of stays, then move or die
            ps = p_stay[v]
            if ps > 0.0:
                k = float(math.floor(math.log(_uniform(state)) / math.log(ps)))
                if k > 0:
                    tk = t + k * d2
                    if tk >= horizon:
                        integral += fv * _disc_int(lam, t, horizon)
                        t = horizon
                        code = CENSORED
                        break
                    integral += fv * _disc_int(lam, t, tk)
                    t = tk
                    if record:
                        if nrec < cap:
                            rec_t[nrec] = t
                            rec_e[nrec] = EV_VERTEX
                            rec_x[nrec] = 0.0
                            rec_v[nrec] = v
                            nrec += 1
                        else:
                            overflow = True
            u = _uniform(state) * (1.0 - ps)
            if u <= p_kill[v]:
                t_end = min(t + d2, horizon)
                integral += fv * _disc_int(lam, t, t_end)
                t = t_end
                if t >= horizon:
                    code = CENSORED
                    break
                death_t = t
                code = DIED
                break
            acc = p_kill[v]
            j = inc_ptr[v + 1] - 1
            for jj in range(inc_ptr[v], inc_ptr[v + 1]):
                acc += inc_p[jj]
                if u <= acc:
                    j = jj
                    break
            e = inc_edge[j]
            x = delta if inc_end[j] == 0 else edge_len[e] - delta
            fx = _f_edge(f_tab, f_n, f_h, e, x)
            integral += 0.5 * d2 * (math.exp(-lam * t) * fv + math.exp(-lam * (t + d2)) * fx)
            t += d2
            at_vertex = False
        else:
            L = edge_len[e]
            internal = edge_v1[e] >= 0
            eps = 1e-12 * (1.0 + x)
            fx = _f_edge(f_tab, f_n, f_h, e, x)
            lattice_end = -1
            if abs(x - delta) < eps:
                lattice_end = 0
            elif internal and abs(x - (L - delta)) < eps:
                lattice_end = 1
            if lattice_end >= 0:
                # symmetric lattice step of size delta in time delta^2
                dt = d2
                if t + dt > horizon:
                    integral += fx * _disc_int(lam, t, horizon)
                    t = horizon
                    code = CENSORED
                    break
                if _uniform(state) <= 0.5:
                    at_vertex = True
                    arrived = True
                    v = edge_v0[e] if lattice_end == 0 else edge_v1[e]
                    fy = f_v[v]
                else:
                    x = 2.0 * delta if lattice_end == 0 else L - 2.0 * delta
                    fy = _f_edge(f_tab, f_n, f_h, e, x)
                integral += 0.5 * dt * (math.exp(-lam * t) * fx + math.exp(-lam * (t + dt)) * fy)
                t += dt
            else:
                # Gaussian step between the two nearest barriers
                if x < delta:
                    lo, lo_kind, hi, hi_kind = 0.0, B_VERTEX0, delta, B_LEVEL
                elif internal and x > L - delta:
                    lo, lo_kind, hi, hi_kind = L - delta, B_LEVEL, L, B_VERTEX1
                else:
                    lo, lo_kind = delta, B_LEVEL
                    if internal:
                        hi, hi_kind = L - delta, B_LEVEL
                    else:
                        hi, hi_kind = math.inf, B_NONE
                lo_id = -1
                hi_id = -1
                hit_now = -1
                for k in range(tgt_ptr[e], tgt_ptr[e + 1]):
                    xt = tgt_x[k]
                    if abs(xt - x) < eps:
                        hit_now = k
                    elif lo < xt < x:
                        lo, lo_kind, lo_id = xt, B_TARGET, tgt_id[k]
                    elif x < xt < hi:
                        hi, hi_kind, hi_id = xt, B_TARGET, tgt_id[k]
                if hit_now >= 0:
                    code = STOP_TARGET
                    stop_id = tgt_id[hit_now]
                    break
                d = min(x - lo, hi - x)
                dt = max(0.0625 * d * d, d2)
                dt = min(dt, dt_max, horizon - t)
                y = x + math.sqrt(dt) * _normal(state)
                kind = B_NONE
                bid = -1
                if y <= lo:
                    kind, bid, y = lo_kind, lo_id, lo
                elif y >= hi:
                    kind, bid, y = hi_kind, hi_id, hi
                elif bridge:
                    plo = math.exp(-2.0 * (x - lo) * (y - lo) / dt)
                    phi = 0.0 if hi_kind == B_NONE else math.exp(-2.0 * (hi - x) * (hi - y) / dt)
                    u = _uniform(state)
                    if u < plo:
                        kind, bid, y = lo_kind, lo_id, lo
                    elif u < plo + phi:
                        kind, bid, y = hi_kind, hi_id, hi
                if kind == B_VERTEX0 or kind == B_VERTEX1:
                    v = edge_v0[e] if kind == B_VERTEX0 else edge_v1[e]
                    fy = f_v[v]
                    at_vertex = True
                    arrived = True
                else:
                    fy = _f_edge(f_tab, f_n, f_h, e, y)
                integral += 0.5 * dt * (math.exp(-lam * t) * fx + math.exp(-lam * (t + dt)) * fy)
                t += dt
                x = y
                if kind == B_TARGET:
                    if record:
                        if nrec < cap:
                            rec_t[nrec] = t
                            rec_e[nrec] = e
                            rec_x[nrec] = x
                            rec_v[nrec] = -1
                            nrec += 1
                        else:
                            overflow = True
                    code = STOP_TARGET
                    stop_id = bid
                    break
        if record:
            if nrec < cap:
                rec_t[nrec] = t
                if at_vertex:
                    rec_e[nrec] = EV_VERTEX
                    rec_x[nrec] = 0.0
                    rec_v[nrec] = v
                else:
                    rec_e[nrec] = e
                    rec_x[nrec] = x
                    rec_v[nrec] = -1
                nrec += 1
            else:
                overflow = True

    if record and code == DIED:
        if nrec < cap:
            rec_t[nrec] = t
            rec_e[nrec] = EV_CEMETERY
            rec_x[nrec] = 0.0
            rec_v[nrec] = -1
            nrec += 1
        else:
            overflow = True
    if overflow:
        nrec = -1
    final_e = -1 if at_vertex else e
    final_v = v if at_vertex else -1
    return first_t, first_v, t, code, stop_id, death_t, integral, nrec, final_e, x, final_v


@njit(cache=True, nogil=True)
def run_batch(
    edge_len, edge_v0, edge_v1,
    vclass, vrate, inc_ptr, inc_edge, inc_end, inc_p, p_stay, p_kill, stop_vertex,
    tgt_ptr, tgt_x, tgt_id,
    f_tab, f_n, f_h, f_v,
    lam, delta, dt_max, horizon, bridge,
    s_edge, s_x, s_vertex, s_t0, path_ids, streams, s_exclude, seed, lo, hi,
    out_first_t, out_first_v, out_stop_t, out_code, out_stop_id, out_death_t, out_integral, out_visits,
):
    dummy_f = np.zeros(1)
    dummy_i = np.zeros(1, np.int64)
    for p in range(lo, hi):
        res = walk(
            edge_len, edge_v0, edge_v1,
            vclass, vrate, inc_ptr, inc_edge, inc_end, inc_p, p_stay, p_kill, stop_vertex,
            tgt_ptr, tgt_x, tgt_id,
            f_tab, f_n, f_h, f_v,
            lam, delta, dt_max, horizon, bridge,
            s_edge[p], s_x[p], s_vertex[p], s_t0[p], seed, path_ids[p], streams[p], s_exclude[p],
            out_visits[p], False, dummy_f, dummy_i, dummy_f, dummy_i,
        )
        out_first_t[p] = res[0]
        out_first_v[p] = res[1]
        out_stop_t[p] = res[2]
        out_code[p] = res[3]
        out_stop_id[p] = res[4]
        out_death_t[p] = res[5]
        out_integral[p] = res[6]
