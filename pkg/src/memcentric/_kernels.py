"""Compiled per-activation steps shared by the command path and the batch path.

Every function here works on flat row arrays indexed by the device-wide row
id. ``Device.issue`` calls the small step helpers one command at a time;
``run_pairs`` strings the same helpers together for long ACT/PRE streams.
"""

import numpy as np
from numba import njit

# Relative slack on the threshold comparison so that accumulated powers such
# as 10 * 1000**(2/3) still count as reaching 1000.
REL_EPS = 1e-9

MIT_NONE, MIT_PARA, MIT_TRR, MIT_PRAC = 0, 1, 2, 3

CAUSE_ROWHAMMER, CAUSE_ROWPRESS = 0, 1

# stats slots
ST_ACTS, ST_PARA, ST_ALERTS, ST_EVENTS, ST_PRAC_VICTIMS = 0, 1, 2, 3, 4
N_STATS = 5

# integer parameter slots for run_pairs
IP_TRCD, IP_TRAS, IP_TRP, IP_RPS, IP_RPB, IP_DIST, IP_MIT, IP_T, IP_RADIUS, IP_RECOVERY = range(10)
N_IP = 10
# float parameter slots
FP_ALPHA, FP_TON_REF, FP_P = range(3)
N_FP = 3


@njit(cache=True)
def press_factor(open_cycles, alpha, ton_ref):
    return (open_cycles / ton_ref) ** alpha


@njit(cache=True)
def disturb(acc, acmin, row, lo, hi, offsets, weights, press, peak, ev_rows, n_ev):
    for k in range(offsets.size):
        v = row + offsets[k]
        if v < lo or v >= hi:
            continue
        a = acc[v] + weights[k] * press
        if a > peak[0]:
            peak[0] = a
        if a >= acmin[v] * (1.0 - REL_EPS):
            acc[v] = 0.0
            ev_rows[n_ev] = v
            n_ev += 1
        else:
            acc[v] = a
    return n_ev


@njit(cache=True)
def refresh_radius(acc, last_refresh, row, lo, hi, radius, cycle):
    n = 0
    for d in range(1, radius + 1):
        for v in (row - d, row + d):
            if lo <= v < hi:
                acc[v] = 0.0
                last_refresh[v] = cycle
                n += 1
    return n


@njit(cache=True)
def prac_precharge(acc, counters, last_refresh, row, lo, hi, threshold, radius, cycle):
    """Returns the number of victims refreshed, or -1 when no alert fired."""
    counters[row] += 1
    if counters[row] < threshold:
        return -1
    n = refresh_radius(acc, last_refresh, row, lo, hi, radius, cycle)
    counters[row] = 0
    return n


@njit(cache=True)
def trr_observe(rows, counts, meta, row):
    n = meta[0]
    for i in range(n):
        if rows[i] == row:
            counts[i] += 1
            return
    if n < rows.size:
        rows[n] = row
        counts[n] = 1
        meta[0] = n + 1
        return
    # full: replace the oldest insertion
    j = meta[1]
    rows[j] = row
    counts[j] = 1
    meta[1] = (j + 1) % rows.size


@njit(cache=True)
def run_pairs(rows, holds, para_u, cycle, alert_release, acc, acmin, counters, last_refresh,
              bank_ready, open_since, trr_rows, trr_counts, trr_meta, ip, fp, offsets, weights,
              stats, peak, ev_rows, ev_pair, ev_cycle, ev_cause, stop_on_flip):
    """ACT/PRE pairs back to back, waiting out any ALERT before the next ACT.

    Returns (pairs done, cycle, events recorded, alert release cycle). Stops
    early when the event buffer cannot hold another precharge's worth.
    """
    t_rcd, t_ras, t_rp = ip[IP_TRCD], ip[IP_TRAS], ip[IP_TRP]
    rps, rpb = ip[IP_RPS], ip[IP_RPB]
    mit = ip[IP_MIT]
    n_ev = 0
    for i in range(rows.size):
        if n_ev + offsets.size > ev_rows.size:
            return i, cycle, n_ev, alert_release
        r = rows[i]
        b = r // rpb
        lo = (r // rps) * rps
        hi = lo + rps
        start = max(cycle, bank_ready[b], alert_release)
        open_since[b] = start
        stats[ST_ACTS] += 1
        if mit == MIT_PARA:
            if para_u[i] < fp[FP_P]:
                refresh_radius(acc, last_refresh, r, lo, hi, 1, start)
                stats[ST_PARA] += 1
        elif mit == MIT_TRR:
            trr_observe(trr_rows, trr_counts, trr_meta, r)
        open_cycles = max(holds[i], t_ras, t_rcd)
        pre_start = start + open_cycles
        if ip[IP_DIST]:
            press = press_factor(open_cycles, fp[FP_ALPHA], fp[FP_TON_REF])
            n0 = n_ev
            n_ev = disturb(acc, acmin, r, lo, hi, offsets, weights, press, peak, ev_rows, n_ev)
            cause = CAUSE_ROWPRESS if press > 1.0 else CAUSE_ROWHAMMER
            for k in range(n0, n_ev):
                ev_pair[k] = i
                ev_cycle[k] = pre_start
                ev_cause[k] = cause
            stats[ST_EVENTS] += n_ev - n0
        done = pre_start + t_rp
        if mit == MIT_PRAC:
            nv = prac_precharge(acc, counters, last_refresh, r, lo, hi,
                                ip[IP_T], ip[IP_RADIUS], done)
            if nv >= 0:
                stats[ST_ALERTS] += 1
                stats[ST_PRAC_VICTIMS] += nv
                alert_release = done + ip[IP_RECOVERY]
        else:
            counters[r] += 1
        cycle = done
        bank_ready[b] = done
        if stop_on_flip and n_ev > 0:
            return i + 1, cycle, n_ev, alert_release
    return rows.size, cycle, n_ev, alert_release


@njit(cache=True)
def prac_exhaustive(n_rows, max_len, offsets, weights, threshold, radius):
    """Depth-first walk over every command string of length ≤ max_len.

    Symbols are an ACT/PRE pair on one of ``n_rows`` rows (2 commands) or a
    refresh of every row (1 command). Returns (traces visited, peak
    accumulated disturbance over all of them).
    """
    acc = np.zeros((max_len + 1, n_rows))
    cnt = np.zeros((max_len + 1, n_rows), dtype=np.int64)
    sym = np.full(max_len + 1, -1, dtype=np.int64)
    used = np.zeros(max_len + 1, dtype=np.int64)
    never = np.full(n_rows, np.inf)
    last = np.zeros(n_rows, dtype=np.int64)
    ev = np.zeros(offsets.size, dtype=np.int64)
    peak = np.zeros(1)
    d = 0
    traces = 0
    while d >= 0:
        s = sym[d] + 1
        sym[d] = s
        if s > n_rows:
            d -= 1
            continue
        cost = 1 if s == n_rows else 2
        if used[d] + cost > max_len:
            continue
        acc[d + 1, :] = acc[d, :]
        cnt[d + 1, :] = cnt[d, :]
        if s == n_rows:
            acc[d + 1, :] = 0.0
        else:
            disturb(acc[d + 1], never, s, 0, n_rows, offsets, weights, 1.0, peak, ev, 0)
            prac_precharge(acc[d + 1], cnt[d + 1], last, s, 0, n_rows, threshold, radius, 0)
        traces += 1
        used[d + 1] = used[d] + cost
        sym[d + 1] = -1
        d += 1
    return traces, peak[0]
