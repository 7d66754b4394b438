"""Restart-based comparison wrappers sharing the learner interface:
fixed-period restart, ground-truth (oracle) restart, and the bare learner.
"""
from __future__ import annotations

import numpy as np

from psrl.wrappers import EpisodeEvents


class BareAgent:
    """The base learner with no wrapper logic at all."""

    name = "bare"

    def __init__(self, learner):
        self.learner = learner
        self.restart_count = 0

    def begin_episode(self, t):
        self._snapshot = self.learner.greedy_policy_snapshot()

    def act(self, h, s):
        return self.learner.select_action(h, s)

    def observe(self, h, s, a, r, s2):
        self.learner.observe(h, s, a, r, s2)

    def end_episode(self, t):
        self.learner.end_episode()
        return EpisodeEvents(t=t, is_probe=False, restart_count=self.restart_count)

    def episode_policy(self):
        return self._snapshot


class PeriodicRestartAgent(BareAgent):
    """Resets the learner every `window` episodes.

    The reset that would land at the very end of the run is skipped: it has
    no behavioral effect and would make window = T differ from the bare
    learner's trace.
    """

    name = "periodic"

    def __init__(self, learner, window, T):
        super().__init__(learner)
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.T = T
        self._since_restart = 0

    def end_episode(self, t):
        self.learner.end_episode()
        events = EpisodeEvents(t=t, is_probe=False, restart_count=self.restart_count)
        self._since_restart += 1
        if self._since_restart >= self.window and t < self.T:
            self.learner.reset()
            self._since_restart = 0
            self.restart_count += 1
            events.restarted = True
            events.restart_reason = "periodic"
            events.restart_count = self.restart_count
        return events


def budget_window(T, n_changes, scale=1.0):
    """Budget-restart recipe: window ~ sqrt(T / (N_T + 1)) * scale."""
    return int(np.ceil(np.sqrt(T / (n_changes + 1.0)) * scale))


class OracleRestartAgent(BareAgent):
    """Resets the learner exactly at the true change episodes."""

    name = "oracle-restart"

    def __init__(self, learner, change_points):
        super().__init__(learner)
        self.change_points = set(int(v) for v in np.asarray(change_points))

    def begin_episode(self, t):
        if t in self.change_points:
            self.learner.reset()
            self.restart_count += 1
            self._restarted_now = True
        else:
            self._restarted_now = False
        super().begin_episode(t)

    def end_episode(self, t):
        self.learner.end_episode()
        events = EpisodeEvents(t=t, is_probe=False, restart_count=self.restart_count)
        if self._restarted_now:
            events.restarted = True
            events.restart_reason = "oracle"
        return events
