"""Numba fast paths for the built-in quadratic family.

Every kernel uses the literal update ``x = mu*x*(1.0-x)`` in the same
operation order as the pure-Python evaluator, so results are bitwise
identical between the two paths.  Kernels are pure functions of their
arguments; parallel sweeps call them from worker processes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_FLOOR = -690.0
_TINY = 1e-300


@njit(cache=True)
def final_point(mu, x, n):
    for _ in range(n):
        x = mu * x * (1.0 - x)
    return x


@njit(cache=True)
def step_q(mu, x, q, n):
    for _ in range(q * n):
        x = mu * x * (1.0 - x)
    return x


@njit(cache=True)
def orbit_with_logsums(mu, x0, n, floor):
    samples = np.empty(n + 1)
    sums = np.empty(n + 1)
    samples[0] = x0
    sums[0] = 0.0
    x = x0
    acc = 0.0
    for i in range(n):
        d = abs(mu * (1.0 - 2.0 * x))
        if d < _TINY:
            acc += floor
        else:
            acc += np.log(d)
        x = mu * x * (1.0 - x)
        samples[i + 1] = x
        sums[i + 1] = acc
    return samples, sums


@njit(cache=True)
def lyap_slope(mu, x0, n, burn, floor):
    x = x0
    s = 0.0
    for _ in range(burn):
        d = abs(mu * (1.0 - 2.0 * x))
        s += floor if d < _TINY else np.log(d)
        x = mu * x * (1.0 - x)
    mid = 0.5 * (burn + n)
    sk = 0.0
    skk = 0.0
    ss = 0.0
    sks = 0.0
    cnt = 1.0
    kc = burn - mid
    sk += kc
    skk += kc * kc
    ss += s
    sks += kc * s
    k = burn
    while k < n:
        d = abs(mu * (1.0 - 2.0 * x))
        s += floor if d < _TINY else np.log(d)
        x = mu * x * (1.0 - x)
        k += 1
        kc = k - mid
        sk += kc
        skk += kc * kc
        ss += s
        sks += kc * s
        cnt += 1.0
    det = cnt * skk - sk * sk
    return (cnt * sks - sk * ss) / det


@njit(cache=True)
def count_crossing(mu, x, target, q, cap):
    """Steps of f^q from x until >= target; (-1, x) when the cap is hit."""
    n = 0
    while x < target:
        for _ in range(q):
            x = mu * x * (1.0 - x)
        n += 1
        if n > cap:
            return -1, x
    return n, x


@njit(cache=True)
def laminar_count(mu, x0, n, burn, lo, hi):
    """(number of runs, laminar count) for the union-of-intervals indicator."""
    x = x0
    for _ in range(burn):
        x = mu * x * (1.0 - x)
    runs = 0
    prev = -1
    lam = 0
    for _ in range(n):
        x = mu * x * (1.0 - x)
        s = 0
        for j in range(lo.shape[0]):
            if lo[j] <= x <= hi[j]:
                s = 1
                break
        lam += s
        if s != prev:
            runs += 1
            prev = s
    return runs, lam


@njit(cache=True)
def laminar_fill(mu, x0, n, burn, lo, hi, lengths, states):
    x = x0
    for _ in range(burn):
        x = mu * x * (1.0 - x)
    idx = -1
    prev = -1
    for _ in range(n):
        x = mu * x * (1.0 - x)
        s = 0
        for j in range(lo.shape[0]):
            if lo[j] <= x <= hi[j]:
                s = 1
                break
        if s != prev:
            idx += 1
            lengths[idx] = 1
            states[idx] = s
            prev = s
        else:
            lengths[idx] += 1
    return idx + 1


@njit(cache=True)
def hist_base(mu, x0, n, burn, nbins):
    counts = np.zeros(nbins, np.int64)
    x = x0
    for _ in range(burn):
        x = mu * x * (1.0 - x)
    for _ in range(n):
        x = mu * x * (1.0 - x)
        b = int(x * nbins)
        if b >= nbins:
            b = nbins - 1
        if b < 0:
            b = 0
        counts[b] += 1
    return counts


@njit(cache=True)
def _induced_len(bounds, q, x):
    """Base iterates consumed by one induced step at x."""
    if bounds[0] <= x and x < bounds[-1]:
        pos = np.searchsorted(bounds, x, side="right") - 1
        return ((bounds.shape[0] - 2) - pos) * q + 1
    return 1


@njit(cache=True)
def br_orbit(mu, bounds, q, c, delta, alpha, n_ind, ret_cap, sample_stride,
             early_stop):
    """Bounded-recurrence bookkeeping along the induced critical orbit.

    Returns (br_pass, first_fail, log_product, base_steps, n_returns,
    ret_idx, ret_x, samp_idx, samp_logd).  Return times are induced
    indices i >= 1 with |orbit_i - c| < delta; log_product accumulates
    ln|orbit_i - c| over those.  samp_logd tracks the running
    log-derivative along the orbit of the critical value for the
    Collet-Eckmann slope fit.
    """
    x = c
    s_ret = 0.0
    br = True
    first_fail = -1
    nret = 0
    ret_i = np.empty(ret_cap, np.int64)
    ret_x = np.empty(ret_cap, np.float64)
    logd = 0.0
    base = 0
    nsamp_cap = n_ind // sample_stride + 2
    samp_i = np.empty(nsamp_cap, np.int64)
    samp_s = np.empty(nsamp_cap, np.float64)
    ns = 0
    i = 0
    while i < n_ind:
        i += 1
        m = _induced_len(bounds, q, x)
        for _ in range(m):
            d = abs(mu * (1.0 - 2.0 * x))
            if base > 0:
                logd += _FLOOR if d < _TINY else np.log(d)
            x = mu * x * (1.0 - x)
            base += 1
        if i % sample_stride == 0:
            samp_i[ns] = i
            samp_s[ns] = logd
            ns += 1
        dx = abs(x - c)
        if dx < delta:
            if nret < ret_cap:
                ret_i[nret] = i
                ret_x[nret] = x
            nret += 1
            s_ret += _FLOOR if dx < _TINY else np.log(dx)
            if br and s_ret < -alpha * i:
                br = False
                first_fail = i
                if early_stop:
                    break
    nk = min(nret, ret_cap)
    return (br, first_fail, s_ret, base, nret, ret_i[:nk], ret_x[:nk],
            samp_i[:ns], samp_s[:ns])


@njit(cache=True)
def br_base_orbit(mu, c, delta, alpha, n_base, ret_cap, early_stop):
    """Same recurrence condition on the plain orbit of c (base indices)."""
    x = c
    s_ret = 0.0
    br = True
    first_fail = -1
    nret = 0
    ret_i = np.empty(ret_cap, np.int64)
    for i in range(1, n_base + 1):
        x = mu * x * (1.0 - x)
        dx = abs(x - c)
        if dx < delta:
            if nret < ret_cap:
                ret_i[nret] = i
            nret += 1
            s_ret += _FLOOR if dx < _TINY else np.log(dx)
            if br and s_ret < -alpha * i:
                br = False
                first_fail = i
                if early_stop:
                    break
    return br, first_fail, s_ret, nret, ret_i[:min(nret, ret_cap)]


@njit(cache=True)
def induced_orbit_final(mu, bounds, q, x, n_ind):
    base = 0
    for _ in range(n_ind):
        m = _induced_len(bounds, q, x)
        for _ in range(m):
            x = mu * x * (1.0 - x)
            base += 1
    return x, base


@njit(cache=True)
def hist_induced(mu, bounds, q, x0, n_ind, burn, nbins):
    counts = np.zeros(nbins, np.int64)
    x = x0
    for _ in range(burn):
        m = _induced_len(bounds, q, x)
        for _ in range(m):
            x = mu * x * (1.0 - x)
    for _ in range(n_ind):
        m = _induced_len(bounds, q, x)
        for _ in range(m):
            x = mu * x * (1.0 - x)
        b = int(x * nbins)
        if b >= nbins:
            b = nbins - 1
        if b < 0:
            b = 0
        counts[b] += 1
    return counts


@njit(cache=True)
def hist_pushforward(mu, bounds, q, x0, max_base, burn, nbins):
    """Bin every base iterate visited along the induced orbit.

    Realizes the fiber-sum construction of the pushed-forward measure:
    an induced visit to a depth-k domain credits all kq intermediate
    iterates.  Stops once max_base base iterates have been credited.
    """
    counts = np.zeros(nbins, np.int64)
    x = x0
    for _ in range(burn):
        x = mu * x * (1.0 - x)
    base = 0
    while base < max_base:
        m = _induced_len(bounds, q, x)
        for _ in range(m):
            x = mu * x * (1.0 - x)
            b = int(x * nbins)
            if b >= nbins:
                b = nbins - 1
            if b < 0:
                b = 0
            counts[b] += 1
            base += 1
    return counts, base


@njit(cache=True)
def induced_hitting(mu, bounds, q, x0, n_ind, vlo, vhi):
    """Hitting-time tallies for V along the induced orbit.

    For each completed excursion of length g outside V the g points
    contribute g, g-1, ..., 1 remaining steps.  The unfinished tail
    excursion is dropped.  Returns (sum_L, outside_counted, inside_count).
    """
    x = x0
    g = 0
    sum_l = 0.0
    counted = 0
    inside = 0
    for _ in range(n_ind):
        m = _induced_len(bounds, q, x)
        for _ in range(m):
            x = mu * x * (1.0 - x)
        if vlo <= x <= vhi:
            sum_l += 0.5 * g * (g + 1.0)
            counted += g
            g = 0
            inside += 1
        else:
            g += 1
    return sum_l, counted, inside


@njit(cache=True)
def base_hitting(mu, x0, n, tlo, thi):
    """Same tallies for the plain orbit entering [tlo, thi)."""
    x = x0
    g = 0
    sum_l = 0.0
    counted = 0
    inside = 0
    for _ in range(n):
        x = mu * x * (1.0 - x)
        if tlo <= x < thi:
            sum_l += 0.5 * g * (g + 1.0)
            counted += g
            g = 0
            inside += 1
        else:
            g += 1
    return sum_l, counted, inside


@njit(cache=True)
def mather_orbit(mu, x0, d, a, reentry_hi, cap):
    """First hit of [d, a) under the plain map, tracking the deepest visit
    to (a, reentry_hi] on the way.  Returns (landing, steps, min_reentry, flag);
    flag 1 means the cap was reached first."""
    x = x0
    min_re = x0 if (a < x0 <= reentry_hi) else 2.0
    for n in range(1, cap + 1):
        x = mu * x * (1.0 - x)
        if d <= x < a:
            return x, n, min_re, 0
        if a < x <= reentry_hi and x < min_re:
            min_re = x
    return x, cap, min_re, 1


@njit(cache=True)
def detect_period(mu, x0, burn, pmax, tol):
    """Attracting-cycle length after burn-in, or 0 if none within pmax."""
    x = x0
    for _ in range(burn):
        x = mu * x * (1.0 - x)
    pts = np.empty(2 * pmax + 1)
    pts[0] = x
    for i in range(1, 2 * pmax + 1):
        x = mu * x * (1.0 - x)
        pts[i] = x
    for p in range(1, pmax + 1):
        ok = True
        for j in range(p + 1):
            if abs(pts[j + p] - pts[j]) > tol:
                ok = False
                break
        if ok:
            return p
    return 0
