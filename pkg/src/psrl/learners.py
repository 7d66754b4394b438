"""Stationary base learners behind one interface.

Wrappers consume only these five operations: select_action, observe,
end_episode, greedy_policy_snapshot, reset. Tie-breaking in every argmax is
lowest action index, fixed repo-wide so reset-equivalence can be checked
bit-for-bit. Both learners select actions from tables that only change
through observe/end_episode calls at earlier steps, so the greedy snapshot
taken at the start of an episode equals the policy actually played in it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from psrl.mdp import MDPDims


@dataclass
class OptimisticQConfig:
    c_bonus: float = 1.0
    delta: float = None  # defaults to 1/T

    def resolve_delta(self, T):
        return self.delta if self.delta is not None else 1.0 / T


class TabularOptimisticQ:
    """Optimistic Q-learning with a Hoeffding-style exploration bonus.

    Q_h initialized to H - h (optimism), learning rate (H+1)/(H+N), bonus
    c sqrt(H^3 ln(S A T / delta) / N), values clipped to [0, H - h].
    """

    def __init__(self, dims: MDPDims, config: OptimisticQConfig = None, seed=0):
        self.dims = dims
        self.config = config or OptimisticQConfig()
        self.seed = seed
        delta = self.config.resolve_delta(dims.T)
        self._log_term = math.log(dims.S * dims.A * dims.T / delta)
        self.reset()

    def reset(self):
        S, A, H = self.dims.S, self.dims.A, self.dims.H
        # optimistic initialization: Q_h = H - h (steps h are 0-based)
        self.Q = np.repeat(np.arange(H, 0, -1.0)[:, None, None], S, axis=1)
        self.Q = np.repeat(self.Q, A, axis=2)
        self.V = np.zeros((H + 1, S))
        self.V[:H] = self.Q.max(axis=2)
        self.N = np.zeros((H, S, A), dtype=np.int64)
        self.rng = np.random.default_rng(self.seed)

    def select_action(self, h, s):
        return int(np.argmax(self.Q[h, s]))

    def observe(self, h, s, a, reward, s_next):
        H = self.dims.H
        self.N[h, s, a] += 1
        n = self.N[h, s, a]
        lr = (H + 1.0) / (H + n)
        bonus = self.config.c_bonus * math.sqrt(H ** 3 * self._log_term / n)
        v_next = self.V[h + 1, s_next] if h + 1 < H else 0.0
        target = reward + v_next + bonus
        q = (1.0 - lr) * self.Q[h, s, a] + lr * target
        self.Q[h, s, a] = min(max(q, 0.0), H - h)
        self.V[h, s] = min(H - h, self.Q[h, s].max())

    def end_episode(self):
        pass

    def greedy_policy_snapshot(self):
        return np.argmax(self.Q, axis=2).astype(np.int64)


@dataclass
class LSVIConfig:
    lam: float = 1.0
    beta: float = None  # defaults to d sqrt(ln(2 d T / delta))
    delta: float = None  # defaults to 1/T

    def resolve(self, dims):
        delta = self.delta if self.delta is not None else 1.0 / dims.T
        beta = self.beta
        if beta is None:
            beta = dims.d * math.sqrt(math.log(2.0 * dims.d * dims.T / delta))
        return self.lam, beta


class LSVIUCBLearner:
    """Least-squares value iteration with a UCB bonus on a linear feature map.

    Replans at episode end: backward pass solving the ridge regression
    (lambda I + sum phi phi^T) w_h = sum phi [r + V_{h+1}(s')] over all past
    transitions, with bonus beta ||phi||_{Lambda_h^{-1}} and values clipped
    to [0, H]. Q tables are materialized over the finite state-action grid,
    so action selection is a table lookup.
    """

    def __init__(self, dims: MDPDims, feature_map, config: LSVIConfig = None, seed=0):
        self.dims = dims
        self.fm = feature_map
        self.config = config or LSVIConfig()
        self.lam, self.beta = self.config.resolve(dims)
        self.seed = seed
        self.Phi = feature_map.matrix()  # (S*A, d)
        self.reset()

    def reset(self):
        H, d = self.dims.H, self.dims.d
        S, A = self.dims.S, self.dims.A
        self.rng = np.random.default_rng(self.seed)
        cap = 64
        self._count = np.zeros(H, dtype=np.int64)
        self._phis = [np.empty((cap, d)) for _ in range(H)]
        self._rewards = [np.empty(cap) for _ in range(H)]
        self._nexts = [np.empty(cap, dtype=np.int64) for _ in range(H)]
        # ridge design matrices, grown one rank-one term per sample
        self._lam_mat = np.tile(self.lam * np.eye(d), (H, 1, 1))
        self._episode_buffer = []
        self.Q = np.zeros((H, S, A))
        self.V = np.zeros((H + 1, S))
        self._plan()

    def select_action(self, h, s):
        return int(np.argmax(self.Q[h, s]))

    def observe(self, h, s, a, reward, s_next):
        self._episode_buffer.append((h, s, a, reward, s_next))

    def _push(self, h, phi, reward, s_next):
        k = self._count[h]
        if k == self._phis[h].shape[0]:
            grow = 2 * k
            self._phis[h] = np.resize(self._phis[h], (grow, self.dims.d))
            self._rewards[h] = np.resize(self._rewards[h], grow)
            self._nexts[h] = np.resize(self._nexts[h], grow)
        self._phis[h][k] = phi
        self._rewards[h][k] = reward
        self._nexts[h][k] = s_next
        self._lam_mat[h] += np.outer(phi, phi)
        self._count[h] = k + 1

    def end_episode(self):
        for h, s, a, reward, s_next in self._episode_buffer:
            self._push(h, self.fm.vector(s, a), reward, s_next)
        self._episode_buffer.clear()
        self._plan()

    def _plan(self):
        H, S, A = self.dims.H, self.dims.S, self.dims.A
        self.V[H] = 0.0
        for h in range(H - 1, -1, -1):
            k = self._count[h]
            lam_inv = np.linalg.inv(self._lam_mat[h])
            if k:
                targets = self._rewards[h][:k] + self.V[h + 1][self._nexts[h][:k]]
                w = lam_inv @ (self._phis[h][:k].T @ targets)
            else:
                w = np.zeros(self.dims.d)
            mean = self.Phi @ w
            bonus = self.beta * np.sqrt(np.einsum("nd,dk,nk->n", self.Phi, lam_inv, self.Phi))
            q = np.clip(mean + bonus, 0.0, float(H))
            self.Q[h] = q.reshape(S, A)
            self.V[h] = self.Q[h].max(axis=1)

    def end_episode_pending(self):
        return len(self._episode_buffer)

    def greedy_policy_snapshot(self):
        return np.argmax(self.Q, axis=2).astype(np.int64)


def make_learner(kind, dims, feature_map=None, seed=0, **params):
    if kind == "optimistic-q":
        cfg = OptimisticQConfig(**params) if params else None
        return TabularOptimisticQ(dims, cfg, seed=seed)
    if kind == "lsvi-ucb":
        if feature_map is None:
            raise ValueError("lsvi-ucb needs a feature map")
        cfg = LSVIConfig(**params) if params else None
        return LSVIUCBLearner(dims, feature_map, cfg, seed=seed)
    raise ValueError(f"unknown learner kind {kind!r}")
