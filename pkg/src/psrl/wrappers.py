"""Detection-restart wrapper around a stationary base learner.

Every `period(k)` episodes the wrapper injects a probing episode: the base
learner is frozen (queried for actions but never updated) and, whenever the
trajectory enters a probed state, the action is drawn uniformly from the
probed action set. Each forced transition appends one sample to the reward
history of the probed (s, a, h) triple and one sample per monitored
successor-feature coordinate; the scalar detector runs on every touched
history. Any trigger restarts the learner and empties all histories at the
end of the episode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from psrl.detect import DetectorConfig, ScalarHistory, stream_trigger
from psrl.mdp import MDPDims


@dataclass
class ProbeSchedule:
    """Probing frequency after the k-th restart.

    alpha(k) = min(1, sqrt(k d H) / (2 sqrt(T) ln(T)^2)), optionally raised
    to a configured floor (the pure rule probes very rarely at desk-scale
    horizons; experiment profiles may want a denser cadence).
    """

    d: int
    H: int
    T: int
    floor: Optional[float] = None

    def __post_init__(self):
        if self.T < 3:
            raise ValueError("schedule needs T >= 3")
        if self.floor is not None and not 0.0 < self.floor <= 1.0:
            raise ValueError("floor must lie in (0, 1]")

    def alpha(self, k):
        if k < 1:
            raise ValueError("restart counter starts at 1")
        raw = math.sqrt(k * self.d * self.H) / (2.0 * math.sqrt(self.T) * math.log(self.T) ** 2)
        a = min(1.0, raw)
        if self.floor is not None:
            a = max(a, self.floor)
        return a

    def period(self, k):
        return math.ceil(1.0 / self.alpha(k))


def is_probe_episode(t, tau, period):
    """Episode t probes iff (t - tau) is a positive multiple of the period."""
    if t <= tau:
        raise ValueError("episode index must exceed the last restart episode")
    return (t - tau) % period == 0


def transition_stream_value(x):
    """Map a feature coordinate in [-1, 1] to a [0, 1] detector stream value."""
    return (x + 1.0) / 2.0


def is_one_hot(feature_map, S, A):
    if feature_map.d != S * A:
        return False
    expected = np.eye(S * A).reshape(S, A, S * A)
    return np.array_equal(feature_map.table, expected)


@dataclass
class EpisodeEvents:
    t: int
    is_probe: bool
    triggers: List[tuple] = field(default_factory=list)
    restarted: bool = False
    restart_reason: str = ""
    restart_count: int = 0


class DetectionRestartAgent:
    """Wraps a base learner with probing, dual change tests and restarts."""

    name = "detect-restart"

    def __init__(self, learner, probes, feature_map, dims: MDPDims,
                 detector: DetectorConfig, schedule: ProbeSchedule,
                 seed=0, tabular_dedup=None, ref_actions=None):
        self.learner = learner
        self.probes = probes
        self.fm = feature_map
        self.dims = dims
        self.detector = detector
        self.schedule = schedule
        self.seed = seed
        if tabular_dedup is None:
            tabular_dedup = is_one_hot(feature_map, dims.S, dims.A)
        self.tabular_dedup = tabular_dedup
        self.ref_actions = list(ref_actions) if ref_actions is not None else list(range(dims.A))
        self.rng = np.random.default_rng(seed)
        self._det_codes = detector._codes()
        self._det_rule = detector.threshold_rule
        self.tau = 0
        self.k = 1
        self.restart_count = 0
        self.restart_flag = False
        self._pending_triggers = []
        self._init_histories()
        self._episode = None

    # -- history bookkeeping -------------------------------------------------

    def _transition_keys(self, s, a, h):
        if self.tabular_dedup:
            return [("P", s, a, h, s2) for s2 in range(self.dims.S)]
        return [("P", s, a, h, j, a2) for j in range(self.fm.d) for a2 in self.ref_actions]

    def _init_histories(self):
        self.reward_hist = {}
        self.trans_hist = {}
        for s, a, h in self.probes.reward_keys():
            self.reward_hist[(s, a, h)] = ScalarHistory()
            for key in self._transition_keys(s, a, h):
                self.trans_hist[key] = ScalarHistory()

    def total_history_samples(self):
        n = sum(hist.n for hist in self.reward_hist.values())
        return n + sum(hist.n for hist in self.trans_hist.values())

    def stream_count(self):
        return len(self.reward_hist) + len(self.trans_hist)

    # -- episode interface ----------------------------------------------------

    def begin_episode(self, t):
        self._probe = is_probe_episode(t, self.tau, self.schedule.period(self.k))
        self._snapshot = self.learner.greedy_policy_snapshot()
        self._forced = {}
        self._episode = t

    def act(self, h, s):
        if self._probe:
            acts = self.probes.probe_actions(h, s)
            if acts is not None:
                a = acts[self.rng.integers(len(acts))] if len(acts) > 1 else acts[0]
                self._forced[h] = (s, a)
                return a
            return int(self._snapshot[h, s])
        return self.learner.select_action(h, s)

    def observe(self, h, s, a, r, s2):
        if not self._probe:
            self.learner.observe(h, s, a, r, s2)
            return
        if self._forced.get(h) != (s, a):
            return  # frozen learner step, nothing recorded
        codes, rule = self._det_codes, self._det_rule
        hist = self.reward_hist[(s, a, h)]
        hist.append(r)
        hit, split = stream_trigger(hist, self.detector, codes, rule)
        if hit:
            self.restart_flag = True
            self._pending_triggers.append(("reward", (s, a, h), split))
        if self.tabular_dedup:
            for s_next in range(self.dims.S):
                key = ("P", s, a, h, s_next)
                th = self.trans_hist[key]
                th.append(1.0 if s_next == s2 else 0.5)
                hit, split = stream_trigger(th, self.detector, codes, rule)
                if hit:
                    self.restart_flag = True
                    self._pending_triggers.append(("transition", key, split))
        else:
            for a2 in self.ref_actions:
                phi = self.fm.vector(s2, a2)
                for j in range(self.fm.d):
                    key = ("P", s, a, h, j, a2)
                    th = self.trans_hist[key]
                    th.append(transition_stream_value(phi[j]))
                    hit, split = stream_trigger(th, self.detector, codes, rule)
                    if hit:
                        self.restart_flag = True
                        self._pending_triggers.append(("transition", key, split))

    def end_episode(self, t):
        if not self._probe:
            self.learner.end_episode()
        events = EpisodeEvents(t=t, is_probe=self._probe,
                               triggers=list(self._pending_triggers),
                               restart_count=self.restart_count)
        self._pending_triggers.clear()
        if self.restart_flag:
            self.learner.reset()
            self._init_histories()
            self.tau = t
            self.k += 1
            self.restart_count += 1
            self.restart_flag = False
            events.restarted = True
            events.restart_reason = "detector"
            events.restart_count = self.restart_count
        return events

    def episode_policy(self):
        """The policy played this episode, for expected-value accounting.

        Learning episodes play the start-of-episode greedy snapshot (both
        learners only consult step-h tables that later steps cannot touch).
        Probing episodes play a known mixture: uniform over the probed
        actions on the probe support, frozen greedy elsewhere.
        """
        if not self._probe:
            return self._snapshot
        H, S, A = self.dims.H, self.dims.S, self.dims.A
        pol = np.zeros((H, S, A))
        hh = np.arange(H)[:, None]
        pol[hh, np.arange(S)[None, :], self._snapshot] = 1.0
        for h in range(H):
            for s, acts in self.probes.support(h).items():
                pol[h, s] = 0.0
                pol[h, s, acts] = 1.0 / len(acts)
        return pol
