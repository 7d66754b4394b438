"""Pure-numpy split-scan kernels; drop-in fallback for the compiled module.

All functions take a prefix-sum array (prefix[i] = sum of the first i
observations) so every segment mean is an O(1) lookup.
"""
import math

import numpy as np

COMPILED = False

# divergence codes
BERNOULLI = 0
GAUSSIAN = 1
# split-grid codes
STRIDE = 0
GEOMETRIC = 1
# threshold-rule codes
ANYTIME = 0
EXPERIMENTAL = 1
# test codes
GLR = 0
GSR = 1


def threshold(n, rule, delta_fa):
    if rule == ANYTIME:
        return 6.0 * math.log(1.0 + math.log(n)) + 2.5 * math.log(4.0 * n ** 1.5 / delta_fa) + 11.0
    return 1.5 * math.log(n) - math.log(delta_fa)


def split_grid(n, grid, stride):
    """Candidate splits t in [1, n-1], ascending; always includes n-1."""
    if n < 2:
        return np.empty(0, dtype=np.int64)
    if grid == STRIDE:
        ts = np.arange(stride, n, stride, dtype=np.int64)
        if ts.size == 0 or ts[-1] != n - 1:
            ts = np.append(ts, n - 1)
        return ts
    out = []
    step = 1
    while n - step >= 1:
        out.append(n - step)
        step <<= 1
    return np.asarray(out[::-1], dtype=np.int64)


def _kl_vec(x, y, div, sigma2, clamp):
    if div == BERNOULLI:
        x = np.clip(x, clamp, 1.0 - clamp)
        y = np.clip(y, clamp, 1.0 - clamp)
        return x * np.log(x / y) + (1.0 - x) * np.log((1.0 - x) / (1.0 - y))
    d = x - y
    return d * d / (2.0 * sigma2)


def _split_stats(prefix, n, div, sigma2, clamp, grid, stride):
    ts = split_grid(n, grid, stride)
    total = prefix[n]
    mu_all = total / n
    left = prefix[ts] / ts
    right = (total - prefix[ts]) / (n - ts)
    stats = ts * _kl_vec(left, mu_all, div, sigma2, clamp) + (n - ts) * _kl_vec(
        right, mu_all, div, sigma2, clamp
    )
    return ts, stats


def max_split_stat(prefix, n, div, sigma2, clamp, grid, stride):
    """(max statistic, argmax split); split -1 and statistic 0 when n < 2."""
    if n < 2:
        return 0.0, -1
    ts, stats = _split_stats(prefix, n, div, sigma2, clamp, grid, stride)
    i = int(np.argmax(stats))
    return float(stats[i]), int(ts[i])


def gsr_log_stat(prefix, n, div, sigma2, clamp, grid, stride):
    """ln sum_t exp(stat_t) over the grid plus the no-change split t = n.

    Accumulated in log space; the caller subtracts ln n to get ln W_n.
    """
    if n < 2:
        return 0.0, -1
    ts, stats = _split_stats(prefix, n, div, sigma2, clamp, grid, stride)
    m = max(float(stats.max()), 0.0)
    s = float(np.exp(stats - m).sum()) + math.exp(-m)
    i = int(np.argmax(stats))
    return m + math.log(s), int(ts[i])


def first_trigger(xs, div, sigma2, clamp, grid, stride, rule, delta_fa, kind):
    """Append xs one at a time, test after every append; first trigger n or 0."""
    xs = np.asarray(xs, dtype=np.float64)
    prefix = np.concatenate(([0.0], np.cumsum(xs)))
    for n in range(2, xs.size + 1):
        beta = threshold(n, rule, delta_fa)
        if kind == GLR:
            stat, _ = max_split_stat(prefix, n, div, sigma2, clamp, grid, stride)
            if stat >= beta:
                return n
        else:
            lse, _ = gsr_log_stat(prefix, n, div, sigma2, clamp, grid, stride)
            if lse - math.log(n) >= beta + math.log(n):
                return n
    return 0
