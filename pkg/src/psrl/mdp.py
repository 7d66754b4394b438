"""Exact episodic MDP machinery.

Dense tabular representation of finite-horizon MDPs, optional linear
parameterization through a feature map, backward-induction value computation,
exact policy evaluation (deterministic and stochastic policies), episode
simulation, and dynamic-regret accounting against a per-segment oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

KERNEL_ATOL = 1e-12
LINEAR_ATOL = 1e-9


@dataclass(frozen=True)
class MDPDims:
    """Problem sizes: states, actions, horizon, episode count, feature dim."""

    S: int
    A: int
    H: int
    T: int
    d: int

    def __post_init__(self):
        for name in ("S", "A", "H", "T", "d"):
            if getattr(self, name) < 1:
                raise ValueError(f"MDPDims.{name} must be >= 1")


class FeatureMap:
    """Total map (s, a) -> R^d, stored densely as a (S, A, d) table.

    Every feature vector must have Euclidean norm <= 1.
    """

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.ndim != 3:
            raise ValueError("feature table must have shape (S, A, d)")
        self.S, self.A, self.d = self.table.shape

    def vector(self, s, a):
        return self.table[s, a]

    def matrix(self):
        """All feature vectors stacked as a (S*A, d) matrix, s-major order."""
        return self.table.reshape(self.S * self.A, self.d)

    def max_norm(self):
        return float(np.max(np.linalg.norm(self.table, axis=2)))

    def validate(self, atol=1e-12):
        if self.max_norm() > 1.0 + atol:
            raise ValueError("feature vectors must have norm <= 1")


def one_hot_feature_map(S, A):
    """Canonical one-hot features: d = S*A, phi(s, a) = e_{s*A + a}.

    The index order is row-major s-then-a, fixed repo-wide.
    """
    d = S * A
    table = np.eye(d).reshape(S, A, d)
    return FeatureMap(table)


@dataclass
class SegmentModel:
    """One stationary segment: per-step reward means and transition kernels.

    r has shape (H, S, A) with entries in [0, 1]; P has shape (H, S, A, S)
    with row-stochastic kernels. Optional linear parameters (theta, mu) with a
    feature map must reproduce r and P through phi^T theta and phi^T mu.
    """

    r: np.ndarray
    P: np.ndarray
    theta: Optional[np.ndarray] = None  # (H, d)
    mu: Optional[np.ndarray] = None  # (H, d, S)
    features: Optional[FeatureMap] = None

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.P = np.asarray(self.P, dtype=np.float64)

    @property
    def H(self):
        return self.r.shape[0]

    @property
    def S(self):
        return self.r.shape[1]

    @property
    def A(self):
        return self.r.shape[2]

    def validate(self, atol=KERNEL_ATOL, linear_atol=LINEAR_ATOL):
        if self.P.shape != (self.H, self.S, self.A, self.S):
            raise ValueError("kernel (H, S, A, S) inconsistent with rewards (H, S, A)")
        if np.any(self.r < -atol) or np.any(self.r > 1.0 + atol):
            raise ValueError("reward means must lie in [0, 1]")
        if np.any(self.P < -atol):
            raise ValueError("kernel entries must be nonnegative")
        rows = self.P.sum(axis=3)
        if np.max(np.abs(rows - 1.0)) > atol:
            raise ValueError("kernel rows must sum to 1")
        if self.theta is not None:
            phi = self.features.table  # (S, A, d)
            r_lin = np.einsum("sad,hd->hsa", phi, self.theta)
            if np.max(np.abs(r_lin - self.r)) > linear_atol:
                raise ValueError("linear reward parameters disagree with r")
        if self.mu is not None:
            phi = self.features.table
            P_lin = np.einsum("sad,hdt->hsat", phi, self.mu)
            if np.max(np.abs(P_lin - self.P)) > linear_atol:
                raise ValueError("linear transition parameters disagree with P")

    def as_linear(self, features=None):
        """Attach exact linear parameters under one-hot features.

        Recovering theta[(s,a)] = r(s,a) and mu(s')[(s,a)] = P(s'|s,a)
        reproduces the tabular model exactly.
        """
        fm = features if features is not None else one_hot_feature_map(self.S, self.A)
        if fm.d != self.S * self.A:
            raise ValueError("one-hot wrapping needs d = S*A")
        theta = self.r.reshape(self.H, self.S * self.A)
        mu = self.P.reshape(self.H, self.S * self.A, self.S)
        return SegmentModel(r=self.r, P=self.P, theta=theta, mu=mu, features=fm)


@dataclass
class ValueTable:
    """State values V (H+1, S) and action values Q (H, S, A); V[H] == 0."""

    V: np.ndarray
    Q: np.ndarray

    def greedy_policy(self):
        """Argmax policy of Q, ties broken by lowest action index."""
        return np.argmax(self.Q, axis=2).astype(np.int64)


def optimal_values(segment, dims=None):
    """Optimal value tables by exact backward induction.

    V_{H+1} = 0, Q_h = r_h + P_h V_{h+1}, V_h = max_a Q_h. Rejects
    non-stochastic kernels.
    """
    segment.validate()
    H, S, A = segment.H, segment.S, segment.A
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = segment.r[h] + segment.P[h] @ V[h + 1]
        V[h] = Q[h].max(axis=1)
    return ValueTable(V=V, Q=Q)


def _as_stochastic_policy(policy, H, S, A):
    """Normalize a policy to a (H, S, A) action-distribution array."""
    pol = np.asarray(policy)
    if pol.shape == (H, S):
        if pol.min() < 0 or pol.max() >= A:
            raise ValueError("policy action out of range")
        out = np.zeros((H, S, A))
        hh, ss = np.meshgrid(np.arange(H), np.arange(S), indexing="ij")
        out[hh, ss, pol.astype(np.int64)] = 1.0
        return out
    if pol.shape == (H, S, A):
        if np.any(pol < 0) or np.max(np.abs(pol.sum(axis=2) - 1.0)) > 1e-9:
            raise ValueError("stochastic policy rows must be distributions")
        return pol.astype(np.float64)
    raise ValueError(f"policy must have shape {(H, S)} or {(H, S, A)}")


def policy_values(segment, policy):
    """Exact evaluation of a deterministic (H, S) or stochastic (H, S, A) policy.

    V_h^pi(s) = sum_a pi(a|s,h) [r_h(s,a) + P_h V_{h+1}^pi (s,a)].
    """
    H, S, A = segment.H, segment.S, segment.A
    pol = _as_stochastic_policy(policy, H, S, A)
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = segment.r[h] + segment.P[h] @ V[h + 1]
        V[h] = np.einsum("sa,sa->s", pol[h], Q[h])
    return ValueTable(V=V, Q=Q)


InitialStates = Union[int, Sequence[int], np.ndarray]


@dataclass
class PSModel:
    """A piecewise-stationary episodic MDP.

    change_points are strictly increasing episode indices in [2, T]; the model
    uses segments[k] on episodes nu_k <= t < nu_{k+1} with nu_0 = 1 and
    nu_{N+1} = T+1. Initial states are oblivious: a fixed state, a per-episode
    array of length T, or a distribution vector over states sampled by the
    environment rng.
    """

    dims: MDPDims
    change_points: np.ndarray
    segments: list
    initial_states: InitialStates = 0
    reward_noise: str = "bernoulli"  # or "deterministic"

    def __post_init__(self):
        self.change_points = np.asarray(self.change_points, dtype=np.int64)
        nus = self.change_points
        if nus.size:
            if np.any(np.diff(nus) <= 0):
                raise ValueError("change points must be strictly increasing")
            if nus[0] < 2 or nus[-1] > self.dims.T:
                raise ValueError("change points must lie in [2, T]")
        if len(self.segments) != nus.size + 1:
            raise ValueError("need one segment more than change points")
        if self.reward_noise not in ("bernoulli", "deterministic"):
            raise ValueError(f"unknown reward noise {self.reward_noise!r}")
        self.num_segments = len(self.segments)

    def segment_index(self, t):
        """Index k with nu_k <= t < nu_{k+1} for an episode t in [1, T]."""
        if not 1 <= t <= self.dims.T:
            raise ValueError("episode index out of range")
        return int(np.searchsorted(self.change_points, t, side="right"))

    def model_at(self, t):
        return self.segments[self.segment_index(t)]

    def initial_state(self, t, rng=None):
        init = self.initial_states
        if isinstance(init, (int, np.integer)):
            return int(init)
        arr = np.asarray(init)
        if arr.ndim == 1 and arr.size == self.dims.T and np.issubdtype(arr.dtype, np.integer):
            return int(arr[t - 1])
        if arr.ndim == 1 and arr.size == self.dims.S:
            if rng is None:
                raise ValueError("distribution initial states need an rng")
            return int(rng.choice(self.dims.S, p=arr))
        raise ValueError("initial_states must be an int, (T,) int array or (S,) distribution")

    def initial_distribution(self, segment_index=0):
        """Start-state distribution used for reachability propagation."""
        init = self.initial_states
        if isinstance(init, (int, np.integer)):
            dist = np.zeros(self.dims.S)
            dist[int(init)] = 1.0
            return dist
        arr = np.asarray(init)
        if arr.ndim == 1 and arr.size == self.dims.S and not np.issubdtype(arr.dtype, np.integer):
            return arr.astype(np.float64)
        # per-episode list: empirical distribution over the segment's episodes
        nus = np.concatenate(([1], self.change_points, [self.dims.T + 1]))
        lo, hi = nus[segment_index], nus[segment_index + 1]
        dist = np.bincount(arr[lo - 1 : hi - 1], minlength=self.dims.S).astype(np.float64)
        return dist / dist.sum()


@dataclass
class EpisodeRecord:
    states: np.ndarray  # (H+1,)
    actions: np.ndarray  # (H,)
    rewards: np.ndarray  # (H,)

    @property
    def total_reward(self):
        return float(self.rewards.sum())


def draw_reward(mean, noise, rng):
    if noise == "deterministic":
        return float(mean)
    return 1.0 if rng.random() < mean else 0.0


def simulate_episode(model, t, agent, rng, s1=None):
    """Roll out one episode of a PSModel.

    The agent must supply act(h, s) for every (h, s) reached; if it also has
    an observe(h, s, a, r, s2) method it is called after every transition.
    Steps h are 0-based internally.
    """
    segment = model.model_at(t)
    H = segment.H
    s = model.initial_state(t, rng) if s1 is None else int(s1)
    states = np.zeros(H + 1, dtype=np.int64)
    actions = np.zeros(H, dtype=np.int64)
    rewards = np.zeros(H)
    states[0] = s
    observe = getattr(agent, "observe", None)
    for h in range(H):
        a = int(agent.act(h, s))
        r = draw_reward(segment.r[h, s, a], model.reward_noise, rng)
        s2 = int(rng.choice(segment.S, p=segment.P[h, s, a]))
        actions[h] = a
        rewards[h] = r
        states[h + 1] = s2
        if observe is not None:
            observe(h, s, a, r, s2)
        s = s2
    return EpisodeRecord(states=states, actions=actions, rewards=rewards)


class OracleCache:
    """Per-segment optimal value tables, computed lazily exactly once.

    Tracks how many times backward induction actually ran so runs can assert
    the oracle is recomputed only at change points.
    """

    def __init__(self, model: PSModel):
        self.model = model
        self._tables = {}
        self.calls = 0

    def table(self, t):
        k = self.model.segment_index(t)
        if k not in self._tables:
            self._tables[k] = optimal_values(self.model.segments[k])
            self.calls += 1
        return self._tables[k]

    def start_value(self, t, s1):
        return float(self.table(t).V[0, int(s1)])


def dynamic_regret(model, start_states, agent_values):
    """Cumulative dynamic regret sequence R(t) = sum_{u<=t} (V*_1(s_1^u) - v_u).

    agent_values[u] is the agent's episode value (expected value of its
    episode policy, or realized return). Oracle tables are computed once per
    segment.
    """
    start_states = np.asarray(start_states, dtype=np.int64)
    agent_values = np.asarray(agent_values, dtype=np.float64)
    if start_states.size != agent_values.size:
        raise ValueError("start_states and agent_values must align")
    oracle = OracleCache(model)
    per_episode = np.empty(agent_values.size)
    for i in range(agent_values.size):
        per_episode[i] = oracle.start_value(i + 1, start_states[i]) - agent_values[i]
    return np.cumsum(per_episode)


@dataclass
class RunTrace:
    """Columnar per-episode log for one run."""

    segment: list = field(default_factory=list)
    is_probe: list = field(default_factory=list)
    restart: list = field(default_factory=list)
    restart_reason: list = field(default_factory=list)
    restart_count: list = field(default_factory=list)
    triggers: list = field(default_factory=list)
    episode_reward: list = field(default_factory=list)
    oracle_value: list = field(default_factory=list)
    agent_value: list = field(default_factory=list)
    start_state: list = field(default_factory=list)
    regret: list = field(default_factory=list)
    cum_regret: list = field(default_factory=list)
    cum_reward: list = field(default_factory=list)
    wall_ns: list = field(default_factory=list)

    def append(self, **kw):
        prev_creg = self.cum_regret[-1] if self.cum_regret else 0.0
        prev_crew = self.cum_reward[-1] if self.cum_reward else 0.0
        self.segment.append(kw["segment"])
        self.is_probe.append(kw["is_probe"])
        self.restart.append(kw["restart"])
        self.restart_reason.append(kw.get("restart_reason", ""))
        self.restart_count.append(kw["restart_count"])
        self.triggers.append(kw.get("triggers", 0))
        self.episode_reward.append(kw["episode_reward"])
        self.oracle_value.append(kw["oracle_value"])
        self.agent_value.append(kw["agent_value"])
        self.start_state.append(kw["start_state"])
        regret = kw["oracle_value"] - kw["agent_value"]
        self.regret.append(regret)
        self.cum_regret.append(prev_creg + regret)
        self.cum_reward.append(prev_crew + kw["episode_reward"])
        self.wall_ns.append(kw.get("wall_ns", 0))

    def __len__(self):
        return len(self.episode_reward)
