"""Compiled inner loops.

Coefficients arrive as a tabulated piecewise-linear table, unpacked into
breakpoints, per-segment metadata, node values and escape bounds (see
``engine.CoefTable``); sticky points as the rows of one array (location,
skew, side probability, left/right volatility, local time scale).

Random numbers are drawn only in the top-level loops and arrays are passed
unpacked: handing a numpy ``Generator`` or a tuple of arrays to a helper costs
more than the step itself.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK = 0
NONFINITE = 1
ESCAPED = 2

# exp(-50) is below any uniform numpy can draw at 53 bits
_BRIDGE_CUTOFF = 50.0


@njit(cache=True, nogil=True, inline="always")
def _locate(bps, meta, y):
    """Node index and interpolation weight of ``y`` in the table."""
    # segment index = number of breakpoints <= y
    j = 0
    hi = bps.shape[0]
    while j < hi:
        mid = (j + hi) // 2
        if bps[mid] <= y:
            j = mid + 1
        else:
            hi = mid
    last = meta[j, 3] - 1.0
    u = (y - meta[j, 0]) * meta[j, 1]
    if u < 0.0:
        u = 0.0
    elif u > last:
        u = last
    i = int(u)
    if i >= last:
        i = int(last) - 1
    return int(meta[j, 2]) + i, u - i


@njit(cache=True, nogil=True, inline="always")
def coef(bps, meta, vals, f, y):
    """Value of tabulated function ``f`` at ``y``."""
    base, w = _locate(bps, meta, y)
    return vals[f, base] * (1.0 - w) + vals[f, base + 1] * w


@njit(cache=True, nogil=True, inline="always")
def _nearest(pts, y):
    m = pts.shape[1]
    best = 0
    dist = abs(y - pts[0, 0])
    for i in range(1, m):
        d = abs(y - pts[0, i])
        if d < dist:
            dist = d
            best = i
    return best


@njit(cache=True, nogil=True, inline="always")
def propose(y, xi, dt, sqdt, bps, meta, vals, bounds, pts):
    """Euler proposal from ``y`` with normal ``xi`` and the touch probability.

    Returns ``(z, b, s, i, a, c, ph, status)``: the proposal, the
    coefficients at ``y``, the nearest sticky point, the normalized distances
    of ``y`` and ``z`` from it and the probability ``ph`` that the
    continuous path touches it during the step.
    """
    base, wt = _locate(bps, meta, y)
    b = vals[0, base] * (1.0 - wt) + vals[0, base + 1] * wt
    s = vals[1, base] * (1.0 - wt) + vals[1, base + 1] * wt
    z = y + b * dt + s * sqdt * xi
    i = -1
    a = 0.0
    c = 0.0
    ph = 0.0
    if pts.shape[1] > 0:
        i = _nearest(pts, y)
        d = y - pts[0, i]
        a = abs(d) / s
        zn = (z - pts[0, i]) / s
        c = abs(zn)
        ph = 1.0
        if d == 0.0:
            c = sqdt * abs(xi)
        elif zn * d > 0.0:
            e = 2.0 * a * c / dt
            ph = math.exp(-e) if e <= _BRIDGE_CUTOFF else 0.0
    status = OK
    if y < bounds[0] or y > bounds[1]:
        status = ESCAPED
    elif not math.isfinite(z):
        status = NONFINITE
    return z, b, s, i, a, c, ph, status


@njit(cache=True, nogil=True, inline="always")
def touch(v, y, b, s, i, a, c, dt, pts):
    """Exit side and local time once the step is known to touch point ``i``.

    ``v`` is a uniform; it picks the side and is then rescaled into a fresh
    uniform for the local time, whose conditional law given the endpoint
    distance is ``sqrt((a+c)^2 + 2 dt E) - (a+c)`` with ``E`` exponential.
    Returns ``(y_new, dl, dW)``.
    """
    x_i = pts[0, i]
    pt = pts[2, i]
    if v < pt:
        y_new = x_i + pts[4, i] * c
        w = v / pt
    else:
        y_new = x_i - pts[3, i] * c
        w = (v - pt) / (1.0 - pt)
    ac = a + c
    dl = pts[5, i] * (math.sqrt(ac * ac - 2.0 * dt * math.log1p(-w)) - ac)
    dw = (y_new - y - b * dt - pts[1, i] * dl) / s
    return y_new, dl, dw


@njit(cache=True, nogil=True)
def undelayed(y0, n_steps, dt, bps, meta, vals, bounds, pts, gen, ys, ells, dws):
    """Fill ``ys[0..n]``, ``ells[0..n, :]`` and ``dws[0..n-1]``.

    Returns ``(status, step_index)``.
    """
    sqdt = math.sqrt(dt)
    m = ells.shape[1]
    ys[0] = y0
    for q in range(m):
        ells[0, q] = 0.0
    y = y0
    for k in range(n_steps):
        xi = gen.standard_normal()
        z, b, s, i, a, c, ph, status = propose(y, xi, dt, sqdt, bps, meta, vals, bounds, pts)
        if status != OK:
            return status, k
        dl = 0.0
        dw = sqdt * xi
        hit = False
        if ph > 0.0:
            u = gen.random()
            if u < ph:
                hit = True
                z, dl, dw = touch(u / ph, y, b, s, i, a, c, dt, pts)
        y = z
        ys[k + 1] = y
        dws[k] = dw
        for q in range(m):
            ells[k + 1, q] = ells[k, q]
        if hit:
            ells[k + 1, i] += dl
    return OK, n_steps


@njit(cache=True, nogil=True)
def delayed(y0, n_max, dt, n_out, dt_out, report, bps, meta, vals, bounds, pts, alphas,
            phi_col, g_col, g_at, gen, out_x, out_l, out_o, out_flag, out_logw, out_int):
    """Simulate Y and sample X = Y(r^-1(t_j)) on the fly.

    Output samples ``t_j = j*dt_out`` for ``j = 0..n_out`` are generated in
    order; only indices listed in the sorted array ``report`` are stored (row
    ``q`` of the outputs for ``report[q]``).  Stops as soon as the clock
    passes the last output time.

    ``phi_col`` >= 0 names the table column of a tilt phi; ``out_logw`` then
    receives ``sum phi(y_k) dW_k - phi^2 dt / 2`` over the steps before the
    sample.  ``g_col`` >= 0 names a column g; ``out_int`` receives the
    integral of g along X, with ``g_at[i]`` used while X sits at point i.
    Returns ``(status, steps_used)``.
    """
    sqdt = math.sqrt(dt)
    m = pts.shape[1]
    ell = np.zeros(m)
    occ = np.zeros(m)
    y = y0
    excess = 0.0  # sum_i alpha_i * ell_i
    logw = 0.0
    integral = 0.0  # of g along the moving part
    j = 0
    q = 0
    n_rep = report.shape[0]
    k = 0
    while k < n_max:
        r = k * dt + excess
        phi = 0.0
        if phi_col >= 0:
            phi = coef(bps, meta, vals, phi_col, y)
        g = 0.0
        if g_col >= 0:
            g = coef(bps, meta, vals, g_col, y)
        xi = gen.standard_normal()
        z, b, s, i, a, c, ph, status = propose(y, xi, dt, sqdt, bps, meta, vals, bounds, pts)
        if status != OK:
            return status, k
        dl = 0.0
        dw = sqdt * xi
        hit = -1
        if ph > 0.0:
            u = gen.random()
            if u < ph:
                hit = i
                z, dl, dw = touch(u / ph, y, b, s, i, a, c, dt, pts)
        dwell = 0.0
        if hit >= 0:
            dwell = alphas[hit] * dl
        r_next = (k + 1) * dt + excess + dwell
        while j <= n_out and j * dt_out < r_next:
            lag = j * dt_out - r
            flag = -1
            if hit >= 0 and lag < dwell:
                flag = hit
            if q < n_rep and report[q] == j:
                out_x[q] = pts[0, flag] if flag >= 0 else y
                for p in range(m):
                    out_l[q, p] = ell[p]
                    out_o[q, p] = occ[p]
                if hit >= 0 and alphas[hit] > 0.0:
                    out_l[q, hit] += min(lag, dwell) / alphas[hit]
                out_flag[q] = flag
                out_logw[q] = logw
                tot = integral + g * max(lag - dwell, 0.0)
                for p in range(m):
                    tot += g_at[p] * alphas[p] * out_l[q, p]
                out_int[q] = tot
                q += 1
            if flag >= 0:
                occ[flag] += dt_out
            j += 1
        if hit >= 0:
            ell[hit] += dl
            excess += dwell
        logw += phi * dw - 0.5 * phi * phi * dt
        integral += g * dt
        y = z
        k += 1
        if j > n_out:
            return OK, k
    # clock never reached the last output: emit the terminal state
    while j <= n_out:
        if q < n_rep and report[q] == j:
            out_x[q] = y
            for p in range(m):
                out_l[q, p] = ell[p]
                out_o[q, p] = occ[p]
            out_flag[q] = -1
            out_logw[q] = logw
            tot = integral
            for p in range(m):
                tot += g_at[p] * alphas[p] * ell[p]
            out_int[q] = tot
            q += 1
        j += 1
    return OK, k


@njit(cache=True, nogil=True)
def exit_run(y0, center, delta, n_max, dt, bps, meta, vals, bounds, pts, alphas, gen):
    """Run Y from ``y0`` until it leaves ``(center-delta, center+delta)``.

    Returns ``(side, s_exit, delay, status)`` where ``side`` is +1/-1 or 0
    when censored and ``delay`` is ``sum_i alpha_i * ell_i`` at exit, so the
    exit time of X is ``s_exit + delay``.  Crossings between grid times are
    detected with the Brownian bridge between consecutive states, which
    removes the overshoot bias of checking the barriers at grid times only.
    """
    sqdt = math.sqrt(dt)
    hi = center + delta
    lo = center - delta
    y = y0
    delay = 0.0
    for k in range(n_max):
        xi = gen.standard_normal()
        z, b, s, i, a, c, ph, status = propose(y, xi, dt, sqdt, bps, meta, vals, bounds, pts)
        if status != OK:
            return 0, k * dt, delay, status
        if ph > 0.0:
            u = gen.random()
            if u < ph:
                z, dl, dw = touch(u / ph, y, b, s, i, a, c, dt, pts)
                delay += alphas[i] * dl
        if z >= hi:
            return 1, (k + 1) * dt, delay, OK
        if z <= lo:
            return -1, (k + 1) * dt, delay, OK
        v = s * s * dt
        e_hi = 2.0 * (hi - y) * (hi - z) / v
        e_lo = 2.0 * (y - lo) * (z - lo) / v
        p_hi = math.exp(-e_hi) if e_hi <= _BRIDGE_CUTOFF else 0.0
        p_lo = math.exp(-e_lo) if e_lo <= _BRIDGE_CUTOFF else 0.0
        if p_hi + p_lo > 0.0:
            u = gen.random()
            if u < p_hi:
                return 1, (k + 1) * dt, delay, OK
            if u < p_hi + p_lo:
                return -1, (k + 1) * dt, delay, OK
        y = z
    return 0, n_max * dt, delay, OK


@njit(cache=True, nogil=True)
def lattice_walk(delta, p_plus, alpha, gen, report_t, out_x, out_dep, out_o):
    """Sticky skew random walk on delta*Z started at 0, sampled at ``report_t``.

    Off the origin each move is +-delta with probability 1/2 and takes
    ``delta**2``; a visit to 0 takes ``alpha*delta + delta**2`` and leaves
    upward with probability ``p_plus``.  The state at time ``t`` is the one
    occupied on ``[event, next event)``; ``report_t`` must be sorted.
    ``out_dep`` receives the departures from 0 completed by ``t`` and
    ``out_o`` the exact time spent at 0 up to ``t``.
    Returns the number of moves made.
    """
    hold0 = alpha * delta + delta * delta
    h = delta * delta
    site = 0
    clock = 0.0
    departures = 0
    moves = 0
    q = 0
    n_rep = report_t.shape[0]
    bits = np.int64(0)
    nbits = 0
    while q < n_rep:
        nxt = clock + (hold0 if site == 0 else h)
        while q < n_rep and report_t[q] < nxt:
            out_x[q] = site * delta
            out_dep[q] = departures
            out_o[q] = departures * hold0
            if site == 0:
                out_o[q] += report_t[q] - clock
            q += 1
        if site == 0:
            departures += 1
            site = 1 if gen.random() < p_plus else -1
        else:
            # 52 fair bits per uniform
            if nbits == 0:
                bits = np.int64(gen.random() * 4503599627370496.0)
                nbits = 52
            site += 1 if (bits & 1) else -1
            bits >>= 1
            nbits -= 1
        moves += 1
        clock = nxt
    return moves


@njit(cache=True, nogil=True)
def lattice_events(delta, p_plus, alpha, T, gen, times, sites):
    """Event path of the same walk: ``sites[e]`` is occupied from ``times[e]``.

    Draws exactly the random numbers :func:`lattice_walk` draws, so both
    describe the same path for the same generator state.  Fills every event
    with time ``<= T`` and returns the number written; the arrays must be
    long enough (see ``LatticeParams.max_events``).
    """
    hold0 = alpha * delta + delta * delta
    h = delta * delta
    site = 0
    clock = 0.0
    bits = np.int64(0)
    nbits = 0
    e = 0
    while clock <= T and e < times.shape[0]:
        times[e] = clock
        sites[e] = site
        e += 1
        nxt = clock + (hold0 if site == 0 else h)
        if site == 0:
            site = 1 if gen.random() < p_plus else -1
        else:
            if nbits == 0:
                bits = np.int64(gen.random() * 4503599627370496.0)
                nbits = 52
            site += 1 if (bits & 1) else -1
            bits >>= 1
            nbits -= 1
        clock = nxt
    return e


@njit(cache=True, nogil=True)
def lattice_exit(delta, p_plus, alpha, k_exit, max_moves, gen):
    """Run the walk from 0 until it reaches ``+-k_exit`` sites.

    Returns ``(side, time, departures)``; ``side`` is 0 when ``max_moves``
    ran out first.
    """
    hold0 = alpha * delta + delta * delta
    h = delta * delta
    site = 0
    clock = 0.0
    departures = 0
    bits = np.int64(0)
    nbits = 0
    for _ in range(max_moves):
        if site == 0:
            clock += hold0
            departures += 1
            site = 1 if gen.random() < p_plus else -1
        else:
            clock += h
            if nbits == 0:
                bits = np.int64(gen.random() * 4503599627370496.0)
                nbits = 52
            site += 1 if (bits & 1) else -1
            bits >>= 1
            nbits -= 1
        if site >= k_exit:
            return 1, clock, departures
        if site <= -k_exit:
            return -1, clock, departures
    return 0, clock, departures
