"""Benchmark environments: lock builders, change schedules, hard instances,
and the episode-indexed environment sequences the harness runs against.

An environment sequence exposes model_at(t), initial_state(t, rng),
reward_noise and an oracle_key(t): the regret oracle recomputes optimal
values only when the key changes (segment index for piecewise-stationary
runs, the episode for exact per-episode drift, the window for interpolated
drift).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from psrl.envs.hard import (
    build_linear_hard_instance,
    build_tabular_hard_instance,
    hypercube_actions,
    jump_amplitude,
    segment_bias,
    tree_depth_for,
)
from psrl.envs.locks import (
    LockLinearSpec,
    LockTabularSpec,
    build_bidirectional_lock,
    build_chain_lock,
    drift_tabular,
    lock_layout,
    ps_endpoint_swap,
)
from psrl.envs.schedules import (
    evenly_spaced_changepoints,
    expected_change_count,
    sample_geometric_changepoints,
)
from psrl.mdp import MDPDims, PSModel, SegmentModel

__all__ = [
    "LockLinearSpec", "LockTabularSpec", "build_bidirectional_lock",
    "build_chain_lock", "drift_tabular", "lock_layout", "ps_endpoint_swap",
    "build_linear_hard_instance", "build_tabular_hard_instance",
    "hypercube_actions", "jump_amplitude", "segment_bias", "tree_depth_for",
    "sample_geometric_changepoints", "evenly_spaced_changepoints",
    "expected_change_count", "PSEnvironment", "DriftEnvironment",
    "ps_lock_alternation", "ps_chain_switch", "drift_linear",
]


class PSEnvironment:
    """Adapter giving a PSModel the environment-sequence interface."""

    oracle_exact = True

    def __init__(self, model: PSModel, kind="", family="tabular"):
        self.model = model
        self.kind = kind
        self.family = family

    @property
    def dims(self):
        return self.model.dims

    @property
    def reward_noise(self):
        return self.model.reward_noise

    @property
    def change_points(self):
        return self.model.change_points

    def model_at(self, t):
        return self.model.model_at(t)

    def oracle_key(self, t):
        return self.model.segment_index(t)

    def initial_state(self, t, rng=None):
        return self.model.initial_state(t, rng)

    def initial_distribution(self, k=0):
        return self.model.initial_distribution(k)


class DriftEnvironment:
    """Per-episode interpolated models.

    morph(t) must return the SegmentModel for episode t. oracle_cadence
    "episode" recomputes the oracle every episode (exact); "window" reuses
    one oracle per window of `window` episodes (cheap, approximate).
    """

    def __init__(self, dims: MDPDims, morph, T, kind="", family="tabular",
                 initial_states=0, reward_noise="deterministic",
                 oracle_cadence="episode", window=1):
        self.dims = dims
        self._morph = morph
        self.T = T
        self.kind = kind
        self.family = family
        self.initial_states = initial_states
        self.reward_noise = reward_noise
        self.oracle_cadence = oracle_cadence
        self.window = max(int(window), 1)
        self.change_points = np.array([], dtype=np.int64)
        self._cache_t = None
        self._cache_model = None

    @property
    def oracle_exact(self):
        return self.oracle_cadence == "episode"

    def model_at(self, t):
        if t != self._cache_t:
            self._cache_model = self._morph(t)
            self._cache_t = t
        return self._cache_model

    def oracle_key(self, t):
        if self.oracle_cadence == "episode":
            return t
        return (t - 1) // self.window

    def initial_state(self, t, rng=None):
        init = self.initial_states
        if isinstance(init, (int, np.integer)):
            return int(init)
        arr = np.asarray(init)
        if rng is None:
            raise ValueError("distribution initial states need an rng")
        return int(rng.choice(self.dims.S, p=arr))

    def initial_distribution(self, k=0):
        init = self.initial_states
        if isinstance(init, (int, np.integer)):
            dist = np.zeros(self.dims.S)
            dist[int(init)] = 1.0
            return dist
        return np.asarray(init, dtype=np.float64)


def ps_lock_alternation(base: SegmentModel, change_points, T) -> PSModel:
    """Endpoint-swap piecewise-stationary lock: segments alternate between
    the base lock and its endpoint-swapped twin."""
    swapped = ps_endpoint_swap(base)
    n_seg = len(change_points) + 1
    segments = [base if k % 2 == 0 else swapped for k in range(n_seg)]
    dims = MDPDims(S=base.S, A=base.A, H=base.H, T=T, d=base.S * base.A)
    return PSModel(dims=dims, change_points=np.asarray(change_points, dtype=np.int64),
                   segments=segments, initial_states=0, reward_noise="deterministic")


def ps_chain_switch(bases, change_points, T, seed=0, good_sequence=None) -> PSModel:
    """Piecewise-stationary chain lock: the good chain changes at every
    change point (uniformly over the other chains, deterministic in seed)."""
    n_seg = len(change_points) + 1
    n_chains = len(bases)
    if good_sequence is None:
        rng = np.random.default_rng(seed)
        seq = [int(rng.integers(n_chains))]
        for _ in range(n_seg - 1):
            others = [g for g in range(n_chains) if g != seq[-1]]
            seq.append(others[rng.integers(n_chains - 1)])
        good_sequence = seq
    if len(good_sequence) != n_seg:
        raise ValueError("need one good-chain index per segment")
    segments = [bases[g] for g in good_sequence]
    ref = bases[0]
    dims = MDPDims(S=ref.S, A=ref.A, H=ref.H, T=T, d=bases[0].features.d)
    model = PSModel(dims=dims, change_points=np.asarray(change_points, dtype=np.int64),
                    segments=segments, initial_states=np.full(ref.S, 1.0 / ref.S),
                    reward_noise="deterministic")
    model.good_sequence = list(good_sequence)
    return model


def interpolate_segments(seg_a: SegmentModel, seg_b: SegmentModel, lam: float) -> SegmentModel:
    r = (1.0 - lam) * seg_a.r + lam * seg_b.r
    P = (1.0 - lam) * seg_a.P + lam * seg_b.P
    return SegmentModel(r=r, P=P)


def drift_linear(bases, T, window=100, seed=0, order=None,
                 oracle_cadence="window") -> DriftEnvironment:
    """Drifting chain lock: convex interpolation between successive base
    models over fixed windows; at a window boundary the model is exactly
    the next base."""
    n_chains = len(bases)
    n_windows = (T + window - 1) // window
    if order is None:
        rng = np.random.default_rng(seed)
        order = [int(rng.integers(n_chains))]
        for _ in range(n_windows + 1):
            others = [g for g in range(n_chains) if g != order[-1]]
            order.append(others[rng.integers(n_chains - 1)])

    def morph(t):
        w, pos = divmod(t - 1, window)
        lam = pos / window
        return interpolate_segments(bases[order[w]], bases[order[w + 1]], lam)

    ref = bases[0]
    dims = MDPDims(S=ref.S, A=ref.A, H=ref.H, T=T, d=bases[0].features.d)
    env = DriftEnvironment(dims=dims, morph=morph, T=T, kind="chain-lock",
                           family="linear",
                           initial_states=np.full(ref.S, 1.0 / ref.S),
                           reward_noise="deterministic",
                           oracle_cadence=oracle_cadence, window=window)
    env.base_order = list(order)
    return env
