"""Event-driven simulation core (numba).

One path is a thinning loop: an envelope clock of constant total rate rings;
each ring picks a uniform site and a positive displacement from the alias
table; out-of-window proposals are rejected (the windowed process), slow-bond
proposals are accepted with probability alpha*n^(-beta); accepted proposals
swap the two occupancies.

The RNG is an inline xorshift128+ seeded through splitmix64 so every path is
bit-reproducible from its 64-bit seed, independent of numba threading.

Time integrals of linear functionals sum_x (eta(x)-b) w(x) are accumulated
exactly: the integrand is piecewise constant between events, so each event
adds S_w * dt.  This keeps the Dynkin decomposition exact along the path.
"""

import math

import numpy as np
from numba import njit

__all__ = ["run_path", "qv_rate"]


@njit(cache=True, inline="always")
def _next_u64(s):
    s1 = s[0]
    s0 = s[1]
    out = s0 + s1
    s[0] = s0
    s1 ^= s1 << np.uint64(23)
    s[1] = s1 ^ s0 ^ (s1 >> np.uint64(17)) ^ (s0 >> np.uint64(26))
    return out


@njit(cache=True, inline="always")
def _next_double(s):
    return float(_next_u64(s) >> np.uint64(11)) * 1.1102230246251565e-16


@njit(cache=True)
def _seed_state(seed):
    s = np.empty(2, dtype=np.uint64)
    z = np.uint64(seed)
    for i in range(2):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        t = z
        t = (t ^ (t >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        t = (t ^ (t >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        s[i] = t ^ (t >> np.uint64(31))
    if s[0] == np.uint64(0) and s[1] == np.uint64(0):
        s[0] = np.uint64(1)
    return s


@njit(cache=True)
def run_path(seed, eta, x_lo, alias_cut, alias_idx, rate_macro, a_slow,
             record_times, gv, weights, b, n_scale, snapshots, Y_out, int_out,
             br_out, nswap_out):
    """Simulate one path in macro time, writing outputs at each record time.

    eta is modified in place.  snapshots may have zero rows to skip storage.
    Returns the number of accepted swaps.
    """
    n_sites = eta.shape[0]
    n_rec = record_times.shape[0]
    n_alias = alias_cut.shape[0]
    kw = weights.shape[0]
    inv_sqrt_n = 1.0 / math.sqrt(n_scale)
    inv_n = 1.0 / n_scale

    s = _seed_state(seed)

    y_cur = 0.0
    for i in range(n_sites):
        y_cur += gv[i] * (eta[i] - b)
    y_cur *= inv_sqrt_n

    s_w = np.zeros(kw)
    int_acc = np.zeros(kw)
    for k in range(kw):
        acc = 0.0
        for i in range(n_sites):
            acc += weights[k, i] * (eta[i] - b)
        s_w[k] = acc

    br = 0.0
    swaps = 0
    t_mark = 0.0
    t = 0.0
    rec = 0
    keep_snaps = snapshots.shape[0] > 0

    while rec < n_rec:
        u = _next_double(s)
        t_new = t - math.log(1.0 - u) / rate_macro
        while rec < n_rec and record_times[rec] <= t_new:
            rt = record_times[rec]
            for k in range(kw):
                int_acc[k] += s_w[k] * (rt - t_mark)
            t_mark = rt
            Y_out[rec] = y_cur
            for k in range(kw):
                int_out[k, rec] = int_acc[k]
            br_out[rec] = br
            nswap_out[rec] = swaps
            if keep_snaps:
                for i in range(n_sites):
                    snapshots[rec, i] = eta[i]
            rec += 1
        if rec >= n_rec:
            break
        for k in range(kw):
            int_acc[k] += s_w[k] * (t_new - t_mark)
        t_mark = t_new
        t = t_new

        i = int(_next_double(s) * n_sites)
        if i >= n_sites:
            i = n_sites - 1
        j = int(_next_double(s) * n_alias)
        if j >= n_alias:
            j = n_alias - 1
        if _next_double(s) >= alias_cut[j]:
            j = alias_idx[j]
        r = j + 1
        i2 = i + r
        if i2 >= n_sites:
            continue
        x = x_lo + i
        if x < 0 and x + r >= 0:
            if _next_double(s) >= a_slow:
                continue
        e1 = eta[i]
        e2 = eta[i2]
        if e1 == e2:
            continue
        eta[i] = e2
        eta[i2] = e1
        sgn = 1.0 if e1 > e2 else -1.0
        dg = gv[i2] - gv[i]
        y_cur += sgn * dg * inv_sqrt_n
        br += inv_n * dg * dg
        for k in range(kw):
            s_w[k] += sgn * (weights[k, i2] - weights[k, i])
        swaps += 1
    return swaps


@njit(cache=True)
def qv_rate(eta, gv, p_r, x_lo, a_slow):
    """sum over unordered in-window bonds of p(r) r^n [dG]^2 [d eta]^2."""
    n_sites = eta.shape[0]
    n_r = p_r.shape[0]
    tot = 0.0
    for r in range(1, min(n_r, n_sites - 1) + 1):
        pr = p_r[r - 1]
        acc_fast = 0.0
        acc_slow = 0.0
        for i in range(n_sites - r):
            if eta[i] != eta[i + r]:
                dg = gv[i + r] - gv[i]
                x = x_lo + i
                if x < 0 and x + r >= 0:
                    acc_slow += dg * dg
                else:
                    acc_fast += dg * dg
        tot += pr * (acc_fast + a_slow * acc_slow)
    return tot
