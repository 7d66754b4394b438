import math

import numpy as np
import pytest

from psrl.detect import (
    DetectorConfig,
    ScalarHistory,
    available_kernels,
    bernoulli_kl,
    first_trigger,
    gaussian_kl,
    glr_statistic,
    glr_test,
    gsr_statistic,
    gsr_test,
    threshold_anytime,
    threshold_experimental,
)

from _oracles import bernoulli_kl_ref, direct_glr_scan

# frozen by independent high-precision evaluation (mpmath, 40 digits)
KL_QUARTER_HALF = 0.13081203594113696
ANYTIME_100_001 = 53.59018608107417
EXPERIMENTAL_1000 = 15.771522060678347  # n=1000, delta = 1/sqrt(50000)


def hist(xs):
    h = ScalarHistory()
    h.extend(xs)
    return h


def bern_cfg(**kw):
    kw.setdefault("divergence", "bernoulli")
    kw.setdefault("threshold_rule", "experimental")
    kw.setdefault("delta_fa", 0.01)
    kw.setdefault("delta_det", 0.01)
    return DetectorConfig(**kw)


class TestDivergences:
    def test_kl_identical_means(self):
        assert bernoulli_kl(0.5, 0.5) == 0.0

    def test_kl_gibbs_inequality_on_grid(self):
        grid = np.linspace(0.05, 0.95, 19)
        for p in grid:
            for q in grid:
                v = bernoulli_kl(p, q)
                if p == q:
                    assert v == 0.0
                else:
                    assert v > 0.0

    def test_kl_quarter_half_frozen(self):
        assert abs(bernoulli_kl(0.25, 0.5) - KL_QUARTER_HALF) < 1e-12

    def test_gaussian_zero_and_symmetry(self):
        assert gaussian_kl(0.3, 0.3, 1.0) == 0.0
        assert gaussian_kl(0.2, 0.7, 0.5) == gaussian_kl(0.7, 0.2, 0.5)

    def test_gaussian_unit(self):
        assert gaussian_kl(1.0, 0.0, 1.0) == 0.5

    def test_gaussian_rejects_bad_variance(self):
        with pytest.raises(ValueError):
            gaussian_kl(0.1, 0.2, 0.0)


class TestScalarHistory:
    def test_prefix_means_match_direct(self):
        rng = np.random.default_rng(1)
        xs = rng.random(500)
        h = hist(xs)
        assert h.n == 500
        for a, b in [(1, 1), (1, 500), (17, 311), (250, 251), (499, 500)]:
            direct = xs[a - 1 : b].mean()
            assert abs(h.mean(a, b) - direct) < 1e-12

    def test_growth_keeps_values(self):
        xs = list(range(100))
        h = hist(xs)
        assert np.array_equal(h.values(), np.array(xs, dtype=float))

    def test_bad_query(self):
        h = hist([1.0, 2.0])
        with pytest.raises(ValueError):
            h.mean(0, 1)
        with pytest.raises(ValueError):
            h.mean(1, 3)


class TestGLRStatistic:
    def test_constant_history_zero(self):
        cfg = bern_cfg()
        stat, _ = glr_statistic(hist([0.25] * 50), cfg)
        assert stat == 0.0  # dyadic constant: prefix means are exact
        stat, _ = glr_statistic(hist([0.4] * 50), cfg)
        assert abs(stat) < 1e-12  # rounding in prefix sums only

    def test_step_history_argmax_and_value(self):
        cfg = bern_cfg()
        h = hist([0, 0, 0, 0, 1, 1, 1, 1])
        stat, split = glr_statistic(h, cfg)
        assert split == 4
        expected = 4 * bernoulli_kl(0.0, 0.5) + 4 * bernoulli_kl(1.0, 0.5)
        assert abs(stat - expected) < 1e-12
        ref_stat, ref_split = direct_glr_scan(h.values(), bernoulli_kl_ref)
        assert ref_split == 4
        assert abs(stat - ref_stat) < 1e-12

    def test_within_half_permutation_invariance(self):
        # the split-4 statistic depends only on segment means
        cfg = bern_cfg()
        base = [0.1, 0.3, 0.3, 0.1, 0.9, 0.7, 0.9, 0.7]
        perm = [0.3, 0.1, 0.1, 0.3, 0.7, 0.9, 0.9, 0.7]
        s1, _ = direct_glr_scan(base, bernoulli_kl_ref, splits=[4])
        s2, _ = direct_glr_scan(perm, bernoulli_kl_ref, splits=[4])
        assert abs(s1 - s2) < 1e-15
        stat, split = glr_statistic(hist(base), cfg)
        assert stat >= s1 - 1e-12

    def test_short_history(self):
        cfg = bern_cfg()
        stat, split = glr_statistic(hist([0.5]), cfg)
        assert stat == 0.0 and split is None

    def test_prefix_scan_equals_direct_scan(self):
        rng = np.random.default_rng(5)
        cfg = bern_cfg()
        for _ in range(20):
            n = int(rng.integers(2, 400))
            xs = (rng.random(n) < rng.random()).astype(float)
            stat, split = glr_statistic(hist(xs), cfg)
            ref_stat, ref_split = direct_glr_scan(xs, bernoulli_kl_ref)
            assert abs(stat - ref_stat) < 1e-12
            assert split == ref_split

    def test_stride_grid_includes_latest_split(self):
        cfg = bern_cfg(split_stride=7)
        xs = [0.0] * 30 + [1.0]
        stat, split = glr_statistic(hist(xs), cfg)
        ref, _ = direct_glr_scan(xs, bernoulli_kl_ref, splits=[30])
        assert stat >= ref - 1e-12  # t = n-1 always scanned

    def test_geometric_grid_subset_of_exhaustive(self):
        rng = np.random.default_rng(9)
        xs = rng.random(200)
        geo = bern_cfg(split_grid="geometric")
        full = bern_cfg()
        s_geo, _ = glr_statistic(hist(xs), geo)
        s_full, _ = glr_statistic(hist(xs), full)
        assert s_geo <= s_full + 1e-12


class TestThresholds:
    def test_anytime_monotone_in_n(self):
        prev = -math.inf
        for n in range(1, 100_001, 1):
            b = threshold_anytime(n, 0.01)
            assert b >= prev - 1e-12
            prev = b

    def test_anytime_decreasing_in_delta(self):
        assert threshold_anytime(100, 0.001) > threshold_anytime(100, 0.01)
        assert threshold_anytime(100, 0.01) > threshold_anytime(100, 0.1)

    def test_anytime_frozen_value(self):
        assert abs(threshold_anytime(100, 0.01) - ANYTIME_100_001) < 1e-10

    def test_experimental_zero_at_origin(self):
        assert threshold_experimental(1, 1.0) == 0.0

    def test_experimental_strictly_increasing(self):
        vals = [threshold_experimental(n, 0.05) for n in range(1, 2000)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_experimental_frozen_value(self):
        delta = 1.0 / math.sqrt(50000)
        assert abs(threshold_experimental(1000, delta) - EXPERIMENTAL_1000) < 1e-12


class TestGLRTest:
    def test_constant_stream_never_triggers(self):
        cfg = bern_cfg()
        h = ScalarHistory()
        for _ in range(200):
            h.append(0.7)
            assert not glr_test(h, cfg).triggered

    def test_trigger_consistency_with_threshold(self):
        cfg = bern_cfg()
        h = hist([0.0] * 30 + [1.0] * 30)
        out = glr_test(h, cfg)
        assert out.triggered == (out.best_statistic >= out.threshold_used)
        assert out.triggered

    def test_false_alarm_rate_stationary(self):
        # 200 seeded replications of 1000 iid Bernoulli(0.3) samples
        cfg = bern_cfg(threshold_rule="experimental", delta_fa=0.01)
        triggers = 0
        for seed in range(200):
            rng = np.random.default_rng(1000 + seed)
            xs = (rng.random(1000) < 0.3).astype(float)
            if first_trigger(xs, cfg, kind="glr") > 0:
                triggers += 1
        assert triggers <= 0.05 * 200

    def test_detection_latency_after_step(self):
        # Bernoulli 0.2 -> 0.8 after 200 samples; detect within 50 more
        cfg = bern_cfg(threshold_rule="experimental", delta_fa=1.0 / math.sqrt(50000))
        within = 0
        for seed in range(200):
            rng = np.random.default_rng(2000 + seed)
            xs = np.concatenate([
                (rng.random(200) < 0.2).astype(float),
                (rng.random(50) < 0.8).astype(float),
            ])
            n = first_trigger(xs, cfg, kind="glr")
            if 200 < n <= 250:
                within += 1
        assert within >= 0.95 * 200

    def test_monotone_alarm_determinism(self):
        cfg = bern_cfg()
        xs = [0.1] * 40 + [0.9] * 40
        n1 = first_trigger(xs, cfg)
        n2 = first_trigger(xs, cfg)
        assert n1 == n2 > 0
        out = glr_test(hist(xs[:n1]), cfg)
        assert out.triggered


class TestGSR:
    def test_constant_stream_log_stat_zero(self):
        cfg = bern_cfg()
        h = hist([0.5] * 64)
        ln_w, _ = gsr_statistic(h, cfg)
        assert ln_w == 0.0  # W_n = n/n exactly for a dyadic constant stream
        assert not gsr_test(h, cfg).triggered
        h2 = hist([0.3] * 64)
        ln_w2, _ = gsr_statistic(h2, cfg)
        assert abs(ln_w2) < 1e-12
        assert not gsr_test(h2, cfg).triggered

    def test_logsumexp_lower_bound(self):
        cfg = bern_cfg()
        h = hist([0.0] * 20 + [1.0] * 20)
        max_stat, _ = glr_statistic(h, cfg)
        ln_w, _ = gsr_statistic(h, cfg)
        assert ln_w >= max_stat - math.log(h.n) - 1e-12

    def test_no_overflow_on_long_separated_stream(self):
        cfg = bern_cfg()
        h = hist([0.0] * 400 + [1.0] * 400)
        ln_w, _ = gsr_statistic(h, cfg)
        assert np.isfinite(ln_w) and ln_w > 100.0

    def test_agreement_with_glr_in_determinate_regimes(self):
        # both trigger when the max statistic clears beta + 2 ln n; neither
        # when it stays below beta
        cfg = bern_cfg()
        rng = np.random.default_rng(77)
        checked = 0
        for _ in range(100):
            n0 = int(rng.integers(5, 60))
            n1 = int(rng.integers(5, 60))
            p0, p1 = rng.random(), rng.random()
            xs = np.concatenate([
                (rng.random(n0) < p0).astype(float),
                (rng.random(n1) < p1).astype(float),
            ])
            h = hist(xs)
            stat, _ = glr_statistic(h, cfg)
            g_out = glr_test(h, cfg)
            s_out = gsr_test(h, cfg)
            beta = g_out.threshold_used
            if stat >= beta + 2 * math.log(h.n):
                assert g_out.triggered and s_out.triggered
                checked += 1
            elif stat < beta:
                assert (not g_out.triggered) and (not s_out.triggered)
                checked += 1
        assert checked > 50


class TestKernelEquivalence:
    def test_compiled_matches_python(self):
        kernels = available_kernels()
        if "compiled" not in kernels:
            pytest.skip("compiled kernel unavailable")
        cy, py = kernels["compiled"], kernels["python"]
        rng = np.random.default_rng(11)
        for div in (0, 1):
            for grid, stride in [(0, 1), (0, 7), (1, 1)]:
                for _ in range(10):
                    n = int(rng.integers(2, 300))
                    xs = rng.random(n)
                    prefix = np.concatenate(([0.0], np.cumsum(xs)))
                    a = cy.max_split_stat(prefix, n, div, 0.25, 1e-6, grid, stride)
                    b = py.max_split_stat(prefix, n, div, 0.25, 1e-6, grid, stride)
                    assert a[1] == b[1]
                    assert abs(a[0] - b[0]) < 1e-12
                    ga = cy.gsr_log_stat(prefix, n, div, 0.25, 1e-6, grid, stride)
                    gb = py.gsr_log_stat(prefix, n, div, 0.25, 1e-6, grid, stride)
                    assert ga[1] == gb[1]
                    assert abs(ga[0] - gb[0]) < 1e-12

    def test_first_trigger_equivalence(self):
        kernels = available_kernels()
        if "compiled" not in kernels:
            pytest.skip("compiled kernel unavailable")
        cy, py = kernels["compiled"], kernels["python"]
        rng = np.random.default_rng(13)
        for kind in (0, 1):
            for _ in range(10):
                xs = np.concatenate([
                    (rng.random(60) < 0.2).astype(float),
                    (rng.random(60) < 0.9).astype(float),
                ])
                a = cy.first_trigger(xs, 0, 0.25, 1e-6, 0, 1, 1, 0.05, kind)
                b = py.first_trigger(xs, 0, 0.25, 1e-6, 0, 1, 1, 0.05, kind)
                assert a == b
