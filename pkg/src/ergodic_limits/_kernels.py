"""Compiled numerical kernels.

Everything here is numba-jitted and shared by the higher-level modules.
Orbit conventions:

* ``K_DOUBLING`` (``lam * x mod 1``): stationary orbits are generated
  *backwards* through the inverse branches (the reversed chain of the
  Lebesgue-stationary map), because forward float64 iteration of a
  base-``lam`` shift loses one digit of state per step and collapses
  after ~53/log2(lam) iterations.  The backward chain is exact in law.
* ``K_LSV`` and ``K_QUADRATIC``: forward iteration from a uniform draw
  (plus burn-in), which is the usual practice for these families.

Per-sample randomness comes from counter-based splitmix64 streams
(:func:`ergodic_limits.rng.u01`), so results do not depend on thread
scheduling.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .rng import u01

K_DOUBLING = 0
K_LSV = 1
K_QUADRATIC = 2

TERM_COS = 0
TERM_SIN = 1
TERM_POLY = 2
TERM_BUMP = 3


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def map_step(kind, param, x):
    if kind == K_DOUBLING:
        return (param * x) % 1.0
    elif kind == K_LSV:
        if x < 0.5:
            xn = x * (1.0 + (2.0 * x) ** param)
            # guard against landing exactly on the neutral fixed point
            return xn if xn > 0.0 else 1e-16
        return 2.0 * x - 1.0
    else:
        return 1.0 - param * x * x


@njit(cache=True, inline="always")
def map_derivative(kind, param, x):
    if kind == K_DOUBLING:
        return param
    elif kind == K_LSV:
        if x < 0.5:
            return 1.0 + (1.0 + param) * (2.0 * x) ** param
        return 2.0
    else:
        return -2.0 * param * x


@njit(cache=True)
def iterate_map(kind, param, x, n):
    for _ in range(n):
        x = map_step(kind, param, x)
    return x


@njit(cache=True, inline="always")
def _domain_lo(kind):
    return -1.0 if kind == K_QUADRATIC else 0.0


@njit(cache=True, inline="always")
def draw_initial(kind, param, key, counter, burn_in):
    """Initial state for a forward orbit: uniform on the domain, burnt in."""
    u = u01(key, counter)
    if kind == K_QUADRATIC:
        x = 2.0 * u - 1.0
    else:
        x = u
    for _ in range(burn_in):
        x = map_step(kind, param, x)
    return x


@njit(cache=True)
def fill_stationary_orbit(kind, param, key, burn_in, out):
    """Fill ``out`` with a stationary orbit x(0), ..., x(n-1).

    Doubling maps are generated backwards through the inverse branches
    starting from a uniform endpoint; the other families run forwards.
    """
    n = out.shape[0]
    if kind == K_DOUBLING:
        lam = int(param)
        x = u01(key, np.uint64(0))
        out[n - 1] = x
        for j in range(n - 2, -1, -1):
            u = u01(key, np.uint64(n - 1 - j))
            digit = int(u * lam)
            if digit >= lam:
                digit = lam - 1
            x = (x + digit) / lam
            out[j] = x
    else:
        x = draw_initial(kind, param, key, np.uint64(0), burn_in)
        for j in range(n):
            out[j] = x
            x = map_step(kind, param, x)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def obs_component(table, starts, offset, comp, x):
    acc = 0.0
    for t in range(starts[comp], starts[comp + 1]):
        kind = int(table[t, 0])
        c0 = table[t, 1]
        c1 = table[t, 2]
        c2 = table[t, 3]
        c3 = table[t, 4]
        if kind == TERM_COS:
            acc += c0 * math.cos(c1 * x + c2)
        elif kind == TERM_SIN:
            acc += c0 * math.sin(c1 * x + c2)
        elif kind == TERM_POLY:
            acc += c0 * x**c1
        else:
            u = 1.0 - abs(x - c1) / c2
            if u > 0.0:
                acc += c0 * u**c3
    return acc - offset[comp]


@njit(cache=True, inline="always")
def obs_eval(table, starts, offset, x, out):
    for comp in range(starts.shape[0] - 1):
        out[comp] = obs_component(table, starts, offset, comp, x)


# ---------------------------------------------------------------------------
# Birkhoff-sum kernels
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def birkhoff_checkpoint_sums(kind, param, table, starts, offset, keys,
                             n_orbit, burn_in, checkpoints, out):
    """Partial Birkhoff sums S_[cp] for every sample and checkpoint.

    out has shape (n_samples, n_checkpoints, d).
    """
    n_samples = keys.shape[0]
    d = starts.shape[0] - 1
    n_cp = checkpoints.shape[0]
    for i in prange(n_samples):
        v = np.empty(d)
        s = np.zeros(d)
        orbit = np.empty(n_orbit)
        fill_stationary_orbit(kind, param, keys[i], burn_in, orbit)
        c = 0
        for j in range(n_orbit):
            obs_eval(table, starts, offset, orbit[j], v)
            for k in range(d):
                s[k] += v[k]
            while c < n_cp and j + 1 == checkpoints[c]:
                for k in range(d):
                    out[i, c, k] = s[k]
                c += 1


@njit(cache=True, parallel=True)
def birkhoff_running_max(kind, param, table, starts, offset, keys,
                         n_orbit, burn_in, checkpoints, out):
    """max_{j <= cp} |S_j| (Euclidean norm) for every sample and checkpoint."""
    n_samples = keys.shape[0]
    d = starts.shape[0] - 1
    n_cp = checkpoints.shape[0]
    for i in prange(n_samples):
        v = np.empty(d)
        s = np.zeros(d)
        orbit = np.empty(n_orbit)
        fill_stationary_orbit(kind, param, keys[i], burn_in, orbit)
        best = 0.0
        c = 0
        for j in range(n_orbit):
            obs_eval(table, starts, offset, orbit[j], v)
            norm2 = 0.0
            for k in range(d):
                s[k] += v[k]
                norm2 += s[k] * s[k]
            if norm2 > best:
                best = norm2
            while c < n_cp and j + 1 == checkpoints[c]:
                out[i, c] = math.sqrt(best)
                c += 1


@njit(cache=True)
def orbit_observable_series(kind, param, table, starts, offset, key,
                            n, burn_in, out):
    """One long orbit's observable values, out has shape (n, d)."""
    d = starts.shape[0] - 1
    v = np.empty(d)
    orbit = np.empty(n)
    fill_stationary_orbit(kind, param, key, burn_in, orbit)
    for j in range(n):
        obs_eval(table, starts, offset, orbit[j], v)
        for k in range(d):
            out[j, k] = v[k]


@njit(cache=True)
def orbit_moments(kind, param, table, starts, offset, key, n, burn_in):
    """Mean, second-moment matrix, and split-half means along one orbit."""
    d = starts.shape[0] - 1
    v = np.empty(d)
    mean = np.zeros(d)
    second = np.zeros((d, d))
    half1 = np.zeros(d)
    if kind == K_DOUBLING:
        orbit = np.empty(n)
        fill_stationary_orbit(kind, param, key, burn_in, orbit)
        for j in range(n):
            obs_eval(table, starts, offset, orbit[j], v)
            for a in range(d):
                mean[a] += v[a]
                for b in range(d):
                    second[a, b] += v[a] * v[b]
            if j < n // 2:
                for a in range(d):
                    half1[a] += v[a]
    else:
        x = draw_initial(kind, param, key, np.uint64(0), burn_in)
        for j in range(n):
            obs_eval(table, starts, offset, x, v)
            for a in range(d):
                mean[a] += v[a]
                for b in range(d):
                    second[a, b] += v[a] * v[b]
            if j < n // 2:
                for a in range(d):
                    half1[a] += v[a]
            x = map_step(kind, param, x)
    return mean / n, second / n, half1 / (n // 2)


# ---------------------------------------------------------------------------
# LSV branch machinery
# ---------------------------------------------------------------------------

@njit(cache=True)
def lsv_left_inverse(y, gamma):
    """Solve x*(1 + (2x)**gamma) = y for x in [0, 1/2] by bisection.

    Runs to full float64 resolution: deep branches have huge forward
    derivatives, so the root must be exact to its last bit.
    """
    lo, hi = 0.0, 0.5
    for _ in range(110):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mid * (1.0 + (2.0 * mid) ** gamma) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True, parallel=True)
def lsv_backward_table(points, gamma, kmax, out):
    """out[k, j] = k-fold left-branch inverse of points[j], k = 0..kmax-1."""
    n = points.shape[0]
    for j in prange(n):
        u = points[j]
        out[0, j] = u
        for k in range(1, kmax):
            u = lsv_left_inverse(u, gamma)
            out[k, j] = u


@njit(cache=True)
def ulam_accumulate(pre_edges, y_lo, width, T):
    """Accumulate cell-to-cell transition weights into T.

    ``pre_edges[b, j]`` is the branch-b preimage of grid edge j (ascending
    in j); the preimage of cell j under branch b is the interval
    [pre_edges[b, j], pre_edges[b, j+1]], whose Lebesgue overlap with each
    source cell i is added to T[i, j] (in units of one cell width).
    """
    n_branches = pre_edges.shape[0]
    n = T.shape[0]
    for b in range(n_branches):
        for j in range(n):
            a = pre_edges[b, j]
            c = pre_edges[b, j + 1]
            if c <= a:
                continue
            i0 = int((a - y_lo) / width)
            i1 = int((c - y_lo) / width)
            if i0 < 0:
                i0 = 0
            if i1 > n - 1:
                i1 = n - 1
            for i in range(i0, i1 + 1):
                cell_lo = y_lo + i * width
                cell_hi = cell_lo + width
                lo = a if a > cell_lo else cell_lo
                hi = c if c < cell_hi else cell_hi
                if hi > lo:
                    T[i, j] += (hi - lo) / width


@njit(cache=True)
def branch_log_derivative(kind, param, xs, tau, out):
    """log |F'(x)| of the tau-step branch map at each point of xs."""
    for i in range(xs.shape[0]):
        x = xs[i]
        acc = 0.0
        for _ in range(tau):
            acc += math.log(abs(map_derivative(kind, param, x)))
            x = map_step(kind, param, x)
        out[i] = acc


@njit(cache=True)
def first_return_time(kind, param, y, y_lo, y_hi, cap):
    """Steps until the orbit of y re-enters [y_lo, y_hi] (first return)."""
    x = map_step(kind, param, y)
    tau = 1
    while not (y_lo <= x <= y_hi):
        x = map_step(kind, param, x)
        tau += 1
        if tau > cap:
            return -1
    return tau


# ---------------------------------------------------------------------------
# grid / induced-observable kernels
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def induced_sums(kind, param, table, starts, offset, mids, taus, out):
    """Sum of v along tau map steps started at each grid midpoint."""
    d = starts.shape[0] - 1
    n = mids.shape[0]
    for i in prange(n):
        v = np.empty(d)
        x = mids[i]
        for k in range(d):
            out[i, k] = 0.0
        for _ in range(taus[i]):
            obs_eval(table, starts, offset, x, v)
            for k in range(d):
                out[i, k] += v[k]
            x = map_step(kind, param, x)


@njit(cache=True, inline="always")
def interp1(xs, ys, x):
    """Piecewise-linear interpolation with edge clamping (xs ascending)."""
    n = xs.shape[0]
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    w = (x - xs[lo]) / (xs[hi] - xs[lo])
    return ys[lo] + w * (ys[hi] - ys[lo])


# ---------------------------------------------------------------------------
# tower-walk kernels
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def tower_chi_growth(kind, param, table, starts, offset, mids, chi_grid,
                     keys, burn_in, checkpoints, out):
    """Running max of |chi o f^k - chi| along stationary tower orbits.

    chi(y, l) = chi'(y) + sum_{j<l} v(T^j y); the walk tracks the tower
    base point online (a Y-visit resets the level to zero).  out has
    shape (n_samples, n_checkpoints).
    """
    n_samples = keys.shape[0]
    d = starts.shape[0] - 1
    n_cp = checkpoints.shape[0]
    n_max = checkpoints[n_cp - 1]
    y_lo = 0.5 if kind == K_LSV else 0.0
    for i in prange(n_samples):
        v = np.empty(d)
        chi0 = np.empty(d)
        chi = np.empty(d)
        run = np.empty(d)
        x = draw_initial(kind, param, keys[i], np.uint64(0), burn_in)
        # move to the next Y-visit so the tower level starts at zero
        guard = 0
        while x < y_lo and guard < 10**7:
            x = map_step(kind, param, x)
            guard += 1
        for k in range(d):
            run[k] = 0.0
            chi0[k] = interp1(mids, chi_grid[:, k], x)
        base_chi = chi0.copy()
        best = 0.0
        c = 0
        for j in range(1, n_max + 1):
            obs_eval(table, starts, offset, x, v)
            x = map_step(kind, param, x)
            if x >= y_lo:
                # return to the base: new tower block
                for k in range(d):
                    run[k] = 0.0
                    base_chi[k] = interp1(mids, chi_grid[:, k], x)
                    chi[k] = base_chi[k]
            else:
                for k in range(d):
                    run[k] += v[k]
                    chi[k] = base_chi[k] + run[k]
            dist2 = 0.0
            for k in range(d):
                diff = chi[k] - chi0[k]
                dist2 += diff * diff
            if dist2 > best:
                best = dist2
            while c < n_cp and j == checkpoints[c]:
                out[i, c] = math.sqrt(best)
                c += 1


@njit(cache=True, parallel=True)
def tower_entry_sums(kind, param, mids, g_grid, keys, burn_in,
                     checkpoints, out):
    """Sums of g over Y-entries:  sum_{k <= cp, x_k in Y} g(x_k).

    g_grid holds grid values of a function on Y (interpolated at the
    entry points); used for the conditional-variance sums, where the
    top-level observable vanishes except at returns.
    """
    n_samples = keys.shape[0]
    n_cp = checkpoints.shape[0]
    n_max = checkpoints[n_cp - 1]
    y_lo = 0.5 if kind == K_LSV else 0.0
    for i in prange(n_samples):
        x = draw_initial(kind, param, keys[i], np.uint64(0), burn_in)
        guard = 0
        while x < y_lo and guard < 10**7:
            x = map_step(kind, param, x)
            guard += 1
        acc = 0.0
        c = 0
        for j in range(1, n_max + 1):
            x = map_step(kind, param, x)
            if x >= y_lo:
                acc += interp1(mids, g_grid, x)
            while c < n_cp and j == checkpoints[c]:
                out[i, c] = acc
                c += 1


@njit(cache=True, parallel=True)
def tower_top_birkhoff_max(kind, param, mids, g_grid, g_mean, keys, burn_in,
                           checkpoints, out):
    """Running max of |sum_{j<k} w o f^j| for w = g_top - g_mean, where
    g_top vanishes off the top tower levels and equals g(next Y-point)
    at pre-return steps."""
    n_samples = keys.shape[0]
    n_cp = checkpoints.shape[0]
    n_max = checkpoints[n_cp - 1]
    y_lo = 0.5 if kind == K_LSV else 0.0
    for i in prange(n_samples):
        x = draw_initial(kind, param, keys[i], np.uint64(0), burn_in)
        guard = 0
        while x < y_lo and guard < 10**7:
            x = map_step(kind, param, x)
            guard += 1
        acc = 0.0
        best = 0.0
        c = 0
        for j in range(1, n_max + 1):
            x = map_step(kind, param, x)
            if x >= y_lo:
                acc += interp1(mids, g_grid, x) - g_mean
            else:
                acc -= g_mean
            if abs(acc) > best:
                best = abs(acc)
            while c < n_cp and j == checkpoints[c]:
                out[i, c] = best
                c += 1
