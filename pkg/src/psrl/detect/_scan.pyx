# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled split-scan kernels for the sequential mean-shift detectors.

Same API as _scan_py; selected at import when the extension built.
"""
from libc.math cimport exp, log

import numpy as np

COMPILED = True

BERNOULLI = 0
GAUSSIAN = 1
STRIDE = 0
GEOMETRIC = 1
ANYTIME = 0
EXPERIMENTAL = 1
GLR = 0
GSR = 1


cdef inline double _clampv(double x, double eps) noexcept nogil:
    if x < eps:
        return eps
    if x > 1.0 - eps:
        return 1.0 - eps
    return x


cdef inline double _kl(double x, double y, int div, double sigma2, double clamp) noexcept nogil:
    cdef double d
    if div == 0:  # Bernoulli
        x = _clampv(x, clamp)
        y = _clampv(y, clamp)
        return x * log(x / y) + (1.0 - x) * log((1.0 - x) / (1.0 - y))
    d = x - y
    return d * d / (2.0 * sigma2)


cdef inline double _threshold(long n, int rule, double delta_fa) noexcept nogil:
    if rule == 0:
        return 6.0 * log(1.0 + log(<double> n)) + 2.5 * log(4.0 * (<double> n) ** 1.5 / delta_fa) + 11.0
    return 1.5 * log(<double> n) - log(delta_fa)


cdef inline double _stat_at(const double[::1] prefix, long n, long t,
                            int div, double sigma2, double clamp) noexcept nogil:
    cdef double total = prefix[n]
    cdef double mu_all = total / n
    cdef double left = prefix[t] / t
    cdef double right = (total - prefix[t]) / (n - t)
    return t * _kl(left, mu_all, div, sigma2, clamp) + (n - t) * _kl(right, mu_all, div, sigma2, clamp)


cdef long _next_split(long t, long n, int grid, long stride) noexcept nogil:
    # successor of split t in ascending scan order; returns 0 when done
    cdef long step, cand
    if grid == 0:
        cand = t + stride
        if cand < n:
            return cand
        if t < n - 1:
            return n - 1  # grid always includes the most recent split
        return 0
    # geometric: splits are n - 2^j; ascending means halving the gap
    step = (n - t) >> 1
    if step >= 1:
        return n - step
    return 0


cdef long _first_split(long n, int grid, long stride) noexcept nogil:
    cdef long step
    if n < 2:
        return 0
    if grid == 0:
        if stride < n:
            return stride
        return n - 1
    step = 1
    while (step << 1) <= n - 1:
        step <<= 1
    return n - step


def max_split_stat(const double[::1] prefix, long n, int div, double sigma2,
                   double clamp, int grid, long stride):
    cdef double best = 0.0
    cdef double stat
    cdef long best_t = -1
    cdef long t
    if n < 2:
        return 0.0, -1
    t = _first_split(n, grid, stride)
    best = -1e300
    while t != 0:
        stat = _stat_at(prefix, n, t, div, sigma2, clamp)
        if stat > best:
            best = stat
            best_t = t
        t = _next_split(t, n, grid, stride)
    return best, best_t


def gsr_log_stat(const double[::1] prefix, long n, int div, double sigma2,
                 double clamp, int grid, long stride):
    cdef long t, best_t = -1, count = 0, i
    cdef double best = -1e300
    cdef double m, s, stat
    cdef double[::1] stats
    if n < 2:
        return 0.0, -1
    # two passes: collect stats, then shifted exponentials
    stats_arr = np.empty(64 + 2 * (n // max(stride, 1) + 2), dtype=np.float64)
    stats = stats_arr
    t = _first_split(n, grid, stride)
    while t != 0:
        stat = _stat_at(prefix, n, t, div, sigma2, clamp)
        stats[count] = stat
        if stat > best:
            best = stat
            best_t = t
        count += 1
        t = _next_split(t, n, grid, stride)
    m = best if best > 0.0 else 0.0
    s = exp(-m)  # no-change split t = n contributes exp(0)
    for i in range(count):
        s += exp(stats[i] - m)
    return m + log(s), best_t


def first_trigger(const double[::1] xs, int div, double sigma2, double clamp,
                  int grid, long stride, int rule, double delta_fa, int kind):
    cdef long N = xs.shape[0]
    cdef long n, t, hit
    cdef double beta, stat, m, s, lse
    cdef double[::1] prefix = np.empty(N + 1, dtype=np.float64)
    prefix[0] = 0.0
    for n in range(N):
        prefix[n + 1] = prefix[n] + xs[n]
    hit = 0
    with nogil:
        for n in range(2, N + 1):
            beta = _threshold(n, rule, delta_fa)
            if kind == 0:
                t = _first_split(n, grid, stride)
                while t != 0:
                    stat = _stat_at(prefix, n, t, div, sigma2, clamp)
                    if stat >= beta:
                        hit = n
                        break
                    t = _next_split(t, n, grid, stride)
            else:
                m = 0.0
                t = _first_split(n, grid, stride)
                while t != 0:
                    stat = _stat_at(prefix, n, t, div, sigma2, clamp)
                    if stat > m:
                        m = stat
                    t = _next_split(t, n, grid, stride)
                s = exp(-m)
                t = _first_split(n, grid, stride)
                while t != 0:
                    s += exp(_stat_at(prefix, n, t, div, sigma2, clamp) - m)
                    t = _next_split(t, n, grid, stride)
                lse = m + log(s)
                if lse - log(<double> n) >= beta + log(<double> n):
                    hit = n
            if hit != 0:
                break
    return hit


def threshold(long n, int rule, double delta_fa):
    return _threshold(n, rule, delta_fa)
