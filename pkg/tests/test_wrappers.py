import math

import numpy as np
import pytest

from psrl.detect import DetectorConfig
from psrl.learners import OptimisticQConfig, TabularOptimisticQ
from psrl.mdp import MDPDims, PSModel, SegmentModel, one_hot_feature_map, simulate_episode
from psrl.probes import tabular_probes
from psrl.wrappers import (
    DetectionRestartAgent,
    ProbeSchedule,
    is_one_hot,
    is_probe_episode,
    transition_stream_value,
)

# frozen by independent high-precision evaluation (mpmath, 40 digits)
ALPHA_1_20_5_50000 = 1.9100655834183728e-4


class TestProbeSchedule:
    def test_monotone_in_restarts(self):
        sched = ProbeSchedule(d=20, H=5, T=50_000)
        alphas = [sched.alpha(k) for k in range(1, 200)]
        assert all(a2 >= a1 for a1, a2 in zip(alphas, alphas[1:]))

    def test_clamped_to_one(self):
        sched = ProbeSchedule(d=10_000, H=100, T=3)
        assert sched.alpha(50) == 1.0

    def test_frozen_value(self):
        sched = ProbeSchedule(d=20, H=5, T=50_000)
        assert abs(sched.alpha(1) - ALPHA_1_20_5_50000) < 1e-12

    def test_small_horizon_rejected(self):
        with pytest.raises(ValueError):
            ProbeSchedule(d=4, H=2, T=2)

    def test_floor(self):
        sched = ProbeSchedule(d=20, H=5, T=50_000, floor=0.25)
        assert sched.alpha(1) == 0.25
        assert sched.period(1) == 4


class TestIsProbeEpisode:
    def test_alpha_one_probes_everywhere(self):
        assert all(is_probe_episode(t, 0, 1) for t in range(1, 50))

    def test_period_ten(self):
        probes = [t for t in range(1, 35) if is_probe_episode(t, 0, 10)]
        assert probes == [10, 20, 30]

    def test_counts_from_restart(self):
        probes = [t for t in range(18, 35) if is_probe_episode(t, 17, 5)]
        assert probes == [22, 27, 32]


class TestTransitionStreamValue:
    def test_endpoints_and_center(self):
        assert transition_stream_value(-1.0) == 0.0
        assert transition_stream_value(1.0) == 1.0
        assert transition_stream_value(0.0) == 0.5

    def test_mean_shift_preserving(self):
        # an affine map halves mean shifts
        xs = np.array([-0.2, 0.4, 0.9])
        delta = 0.3
        shifted = xs + delta
        diff = transition_stream_value(shifted) - transition_stream_value(xs)
        assert np.allclose(diff, delta / 2)


def two_state_swap_model(T, change_points, p_swap=False, noise="deterministic"):
    """S=2, A=1, H=1; reward at state 0 flips 1 <-> 0 across segments."""
    S, A, H = 2, 1, 1
    segs = []
    for k in range(len(change_points) + 1):
        hi = (k % 2 == 0)
        r = np.zeros((H, S, A))
        r[0, 0, 0] = 1.0 if hi else 0.0
        r[0, 1, 0] = 0.5
        P = np.zeros((H, S, A, S))
        P[0, :, 0, 0] = 1.0
        segs.append(SegmentModel(r=r, P=P))
    dims = MDPDims(S=S, A=A, H=H, T=T, d=S * A)
    return PSModel(dims=dims, change_points=np.asarray(change_points, dtype=np.int64),
                   segments=segs, initial_states=0, reward_noise=noise)


def make_agent(model, seed=0, floor=1.0, rule="experimental", delta=None):
    dims = model.dims
    learner = TabularOptimisticQ(dims, OptimisticQConfig(c_bonus=0.5), seed=seed)
    probes = tabular_probes(dims.S, dims.A, dims.H)
    fm = one_hot_feature_map(dims.S, dims.A)
    delta = delta if delta is not None else 1.0 / math.sqrt(dims.T)
    det = DetectorConfig(divergence="bernoulli", threshold_rule=rule,
                         delta_fa=delta, delta_det=delta)
    sched = ProbeSchedule(d=dims.d, H=dims.H, T=dims.T, floor=floor)
    return DetectionRestartAgent(learner, probes, fm, dims, det, sched, seed=seed)


def run_episodes(model, agent, T, seed=0):
    rng = np.random.default_rng(seed)
    events = []
    records = []
    for t in range(1, T + 1):
        agent.begin_episode(t)
        rec = simulate_episode(model, t, agent, rng)
        events.append(agent.end_episode(t))
        records.append(rec)
    return events, records


class TestDetectionRestart:
    def test_detects_reward_change_and_restarts(self):
        model = two_state_swap_model(T=60, change_points=[25])
        agent = make_agent(model)
        events, _ = run_episodes(model, agent, 60)
        restarts = [e.t for e in events if e.restarted]
        assert len(restarts) == 1
        assert 25 <= restarts[0] <= 45
        assert all(e.restart_reason == "detector" for e in events if e.restarted)

    def test_two_changes_increment_counter(self):
        model = two_state_swap_model(T=90, change_points=[25, 55])
        agent = make_agent(model)
        events, _ = run_episodes(model, agent, 90)
        restarts = [e for e in events if e.restarted]
        assert len(restarts) == 2
        assert agent.k == 3
        assert restarts[-1].restart_count == 2

    def test_restart_causality(self):
        model = two_state_swap_model(T=90, change_points=[25, 55])
        agent = make_agent(model)
        events, _ = run_episodes(model, agent, 90)
        for e in events:
            if e.restarted:
                assert len(e.triggers) >= 1

    def test_history_hygiene(self):
        model = two_state_swap_model(T=60, change_points=[25])
        agent = make_agent(model)
        rng = np.random.default_rng(1)
        for t in range(1, 61):
            agent.begin_episode(t)
            before = agent.total_history_samples()
            simulate_episode(model, t, agent, rng)
            ev = agent.end_episode(t)
            after = agent.total_history_samples()
            if ev.restarted:
                assert after == 0
            elif ev.is_probe:
                # at most H reward samples per probing episode, each with
                # its block of transition samples
                per_step = 1 + model.dims.S
                assert after - before <= model.dims.H * per_step

    def test_frozen_learner_on_probe_episodes(self):
        model = two_state_swap_model(T=40, change_points=[])
        agent = make_agent(model, floor=0.5)  # probe every other episode
        rng = np.random.default_rng(2)
        for t in range(1, 41):
            agent.begin_episode(t)
            q_before = agent.learner.Q.copy()
            snap_before = agent.learner.greedy_policy_snapshot()
            simulate_episode(model, t, agent, rng)
            ev = agent.end_episode(t)
            if ev.is_probe and not ev.restarted:
                assert np.array_equal(agent.learner.Q, q_before)
                assert np.array_equal(agent.learner.greedy_policy_snapshot(), snap_before)

    def test_probe_cadence_resets_after_restart(self):
        model = two_state_swap_model(T=80, change_points=[30])
        agent = make_agent(model, floor=0.2)  # period 5
        events, _ = run_episodes(model, agent, 80)
        restart_t = [e.t for e in events if e.restarted][0]
        probes_after = [e.t for e in events if e.is_probe and e.t > restart_t]
        period = agent.schedule.period(agent.k)
        assert probes_after[0] == restart_t + period

    def test_tabular_stream_values(self):
        model = two_state_swap_model(T=20, change_points=[])
        agent = make_agent(model)
        run_episodes(model, agent, 20)
        for key, hist in agent.trans_hist.items():
            vals = set(hist.values().tolist())
            assert vals <= {0.5, 1.0}

    def test_stream_count_bound(self):
        model = two_state_swap_model(T=20, change_points=[])
        agent = make_agent(model)
        dims = model.dims
        total_pairs = agent.probes.total_pairs
        assert agent.stream_count() == total_pairs + total_pairs * dims.S

    def test_stationary_false_alarm_budget(self):
        # stochastic transitions, stationary model, anytime threshold:
        # restart frequency stays within the per-stream union budget
        S, A, H, T = 2, 1, 1, 2000
        r = np.zeros((H, S, A))
        r[0, 0, 0] = 0.6
        P = np.zeros((H, S, A, S))
        P[0, :, 0, :] = [0.7, 0.3]
        seg = SegmentModel(r=r, P=P)
        dims = MDPDims(S=S, A=A, H=H, T=T, d=2)
        model = PSModel(dims=dims, change_points=np.array([], dtype=np.int64),
                        segments=[seg], initial_states=0, reward_noise="bernoulli")
        delta = 1e-3
        total_restarts = 0
        for seed in range(20):
            agent = make_agent(model, seed=seed, rule="anytime", delta=delta)
            events, _ = run_episodes(model, agent, T, seed=1000 + seed)
            total_restarts += sum(e.restarted for e in events)
        budget = agent.stream_count() * delta * 20
        assert total_restarts <= max(budget, 1)

    def test_short_history_cannot_trigger_post_restart(self):
        model = two_state_swap_model(T=60, change_points=[25])
        agent = make_agent(model)
        rng = np.random.default_rng(3)
        just_restarted = False
        for t in range(1, 61):
            agent.begin_episode(t)
            simulate_episode(model, t, agent, rng)
            ev = agent.end_episode(t)
            if just_restarted:
                assert not ev.restarted  # n <= 1 in every history
            just_restarted = ev.restarted

    def test_end_to_end_determinism(self):
        model = two_state_swap_model(T=70, change_points=[30], noise="bernoulli")

        def trace(seed):
            agent = make_agent(model, seed=seed)
            events, records = run_episodes(model, agent, 70, seed=seed)
            return ([(e.t, e.is_probe, e.restarted) for e in events],
                    [rec.rewards.tolist() for rec in records])

        assert trace(9) == trace(9)

    def test_mixture_policy_shape(self):
        model = two_state_swap_model(T=20, change_points=[])
        agent = make_agent(model)
        agent.begin_episode(1)  # floor=1.0: every episode probes
        pol = agent.episode_policy()
        assert pol.shape == (1, 2, 1)
        assert np.allclose(pol.sum(axis=2), 1.0)

    def test_one_hot_detection(self):
        fm = one_hot_feature_map(3, 2)
        assert is_one_hot(fm, 3, 2)
        fm.table[0, 0, 0] = 0.5
        assert not is_one_hot(fm, 3, 2)
