"""Univariate sequential mean-shift detection.

A single template statistic scans all candidate split points of a scalar
history and compares the best split against a threshold; the likelihood-ratio
(GLR) variant triggers on the max split statistic, the Shiryaev-Roberts (GSR)
variant on the log-average of exponentiated split statistics. Divergences:
Bernoulli KL for [0,1]-bounded streams, or a Gaussian mean-shift proxy.

The split scan is the hot path: it runs once per appended observation over
O(n) candidate splits. A compiled kernel is selected at import when present;
set PSRL_PURE_PYTHON=1 to force the numpy fallback.
"""
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from psrl.detect import _scan_py


def _load_compiled():
    try:
        from psrl.detect import _scan

        return _scan
    except ImportError:
        return None


if os.environ.get("PSRL_PURE_PYTHON"):
    _kernel = _scan_py
else:
    _kernel = _load_compiled() or _scan_py

KERNEL_NAME = "compiled" if _kernel.COMPILED else "python"

_DIV = {"bernoulli": 0, "gaussian": 1}
_GRID = {"stride": 0, "geometric": 1}
_RULE = {"anytime": 0, "experimental": 1}
_KIND = {"glr": 0, "gsr": 1}


def available_kernels():
    """Mapping of kernel name -> module, for the benchmark script."""
    out = {"python": _scan_py}
    compiled = _load_compiled()
    if compiled is not None:
        out["compiled"] = compiled
    return out


@dataclass
class DetectorConfig:
    divergence: str = "bernoulli"
    sigma2: float = 0.25  # maximal variance of a [0,1]-bounded variable
    threshold_rule: str = "anytime"
    delta_fa: float = 0.01
    delta_det: float = 0.01
    split_stride: int = 1
    split_grid: str = "stride"
    clamp_eps: float = 1e-6

    def __post_init__(self):
        if self.divergence not in _DIV:
            raise ValueError(f"unknown divergence {self.divergence!r}")
        if self.threshold_rule not in _RULE:
            raise ValueError(f"unknown threshold rule {self.threshold_rule!r}")
        if self.split_grid not in _GRID:
            raise ValueError(f"unknown split grid {self.split_grid!r}")
        if not 0.0 < self.delta_fa < 1.0 or not 0.0 < self.delta_det < 1.0:
            raise ValueError("false-alarm and detection levels must lie in (0, 1)")
        if self.split_stride < 1:
            raise ValueError("split_stride must be >= 1")
        if self.divergence == "gaussian" and self.sigma2 <= 0.0:
            raise ValueError("gaussian divergence needs sigma2 > 0")
        if self.clamp_eps <= 0.0:
            raise ValueError("clamp_eps must be positive")

    def _codes(self):
        return (_DIV[self.divergence], self.sigma2, self.clamp_eps,
                _GRID[self.split_grid], self.split_stride)


class ScalarHistory:
    """A monitored scalar stream with O(1) prefix-sum mean queries.

    Raw observations are retained in insertion order (exhaustive cross-checks
    need them); prefix sums of values and squares grow alongside.
    """

    __slots__ = ("n", "_xs", "_prefix", "_prefix_sq")

    def __init__(self, capacity=16):
        self.n = 0
        self._xs = np.empty(capacity, dtype=np.float64)
        self._prefix = np.zeros(capacity + 1, dtype=np.float64)
        self._prefix_sq = np.zeros(capacity + 1, dtype=np.float64)

    def append(self, x):
        if self.n == self._xs.size:
            grow = 2 * self._xs.size
            self._xs = np.resize(self._xs, grow)
            self._prefix = np.resize(self._prefix, grow + 1)
            self._prefix_sq = np.resize(self._prefix_sq, grow + 1)
        x = float(x)
        self._xs[self.n] = x
        self._prefix[self.n + 1] = self._prefix[self.n] + x
        self._prefix_sq[self.n + 1] = self._prefix_sq[self.n] + x * x
        self.n += 1

    def extend(self, xs):
        for x in xs:
            self.append(x)

    def values(self):
        return self._xs[: self.n]

    def prefix(self):
        return self._prefix[: self.n + 1]

    def mean(self, a, b):
        """Mean of observations a..b, 1-indexed inclusive."""
        if not 1 <= a <= b <= self.n:
            raise ValueError("mean query out of range")
        return (self._prefix[b] - self._prefix[a - 1]) / (b - a + 1)

    def variance(self, a, b):
        """Population variance of observations a..b (diagnostics)."""
        if not 1 <= a <= b <= self.n:
            raise ValueError("variance query out of range")
        m = b - a + 1
        s1 = self._prefix[b] - self._prefix[a - 1]
        s2 = self._prefix_sq[b] - self._prefix_sq[a - 1]
        return max(s2 / m - (s1 / m) ** 2, 0.0)


@dataclass
class DetectionOutcome:
    triggered: bool
    best_split: Optional[int]
    best_statistic: float
    threshold_used: float


def bernoulli_kl(x, y, clamp_eps=1e-6):
    """KL(Ber(x) || Ber(y)) with both means clamped away from {0, 1}."""
    x = min(max(float(x), clamp_eps), 1.0 - clamp_eps)
    y = min(max(float(y), clamp_eps), 1.0 - clamp_eps)
    return x * math.log(x / y) + (1.0 - x) * math.log((1.0 - x) / (1.0 - y))


def gaussian_kl(x, y, sigma2=0.25):
    """Gaussian mean-shift divergence (x - y)^2 / (2 sigma^2)."""
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    d = float(x) - float(y)
    return d * d / (2.0 * sigma2)


def threshold_anytime(n, delta_fa):
    """Anytime-valid threshold 6 ln(1 + ln n) + (5/2) ln(4 n^{3/2}/delta) + 11."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 6.0 * math.log(1.0 + math.log(n)) + 2.5 * math.log(4.0 * n ** 1.5 / delta_fa) + 11.0


def threshold_experimental(n, delta_fa):
    """Light-weight threshold ln(n^{3/2}/delta)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.5 * math.log(n) - math.log(delta_fa)


def threshold_for(cfg, n):
    if cfg.threshold_rule == "anytime":
        return threshold_anytime(n, cfg.delta_fa)
    return threshold_experimental(n, cfg.delta_fa)


def glr_statistic(history, cfg):
    """Max over candidate splits t of t kl(mean_1:t, mean_1:n) + (n-t) kl(mean_t+1:n, mean_1:n).

    Returns (statistic, split); statistic 0 and split None when n < 2.
    """
    div, sigma2, clamp, grid, stride = cfg._codes()
    stat, t = _kernel.max_split_stat(history.prefix(), history.n, div, sigma2, clamp, grid, stride)
    return (stat, t) if t >= 1 else (0.0, None)


def glr_test(history, cfg):
    stat, split = glr_statistic(history, cfg)
    if history.n < 2:
        return DetectionOutcome(False, None, 0.0, math.inf)
    beta = threshold_for(cfg, history.n)
    return DetectionOutcome(stat >= beta, split, stat, beta)


def gsr_statistic(history, cfg):
    """ln W_n with W_n = (1/n) sum over splits (incl. t = n) of exp(split stat).

    Exponentials are accumulated with a log-sum-exp shift so large statistics
    cannot overflow. Returns (ln W_n, argmax split).
    """
    div, sigma2, clamp, grid, stride = cfg._codes()
    lse, t = _kernel.gsr_log_stat(history.prefix(), history.n, div, sigma2, clamp, grid, stride)
    if t < 1:
        return 0.0, None
    return lse - math.log(history.n), t


def gsr_test(history, cfg):
    ln_w, split = gsr_statistic(history, cfg)
    if history.n < 2:
        return DetectionOutcome(False, None, 0.0, math.inf)
    beta = threshold_for(cfg, history.n) + math.log(history.n)
    return DetectionOutcome(ln_w >= beta, split, ln_w, beta)


def run_test(history, cfg, kind="glr"):
    return glr_test(history, cfg) if kind == "glr" else gsr_test(history, cfg)


def stream_trigger(history, cfg, codes=None, rule=None):
    """Allocation-light trigger check for the wrapper's per-append hot loop.

    Same decision as glr_test; returns (triggered, best_split).
    """
    n = history.n
    if n < 2:
        return False, None
    if codes is None:
        codes = cfg._codes()
    div, sigma2, clamp, grid, stride = codes
    stat, t = _kernel.max_split_stat(history.prefix(), n, div, sigma2, clamp, grid, stride)
    if rule is None:
        rule = cfg.threshold_rule
    if rule == "anytime":
        beta = 6.0 * math.log(1.0 + math.log(n)) + 2.5 * math.log(4.0 * n ** 1.5 / cfg.delta_fa) + 11.0
    else:
        beta = 1.5 * math.log(n) - math.log(cfg.delta_fa)
    return stat >= beta, t


def first_trigger(xs, cfg, kind="glr"):
    """Feed xs one sample at a time, testing after every append.

    Returns the first sample count at which the test triggers, or 0.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    div, sigma2, clamp, grid, stride = cfg._codes()
    return int(_kernel.first_trigger(xs, div, sigma2, clamp, grid, stride,
                                     _RULE[cfg.threshold_rule], cfg.delta_fa, _KIND[kind]))
