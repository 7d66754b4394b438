"""Combination-lock benchmark builders.

Bidirectional lock (tabular): a routing state feeds two chains of H-1 states
each; along a chain exactly one action advances (succeeding with probability
0.98, else falling to the absorbing sink) while every other action drops to
the sink immediately. The chain endpoints pay 1 and 0.25 at the final step;
wrong actions pay the sink rate 1/(8H) at the transition step and the sink
pays 1/(8H) per step thereafter, a dense local optimum. State layout, fixed
and documented: 0 = routing, 1..H-1 = first chain, H..2H-2 = second chain,
2H-1 = sink, so S = 2H.

Chain lock (linear): one-hot latent features of dimension d; each special
state has one action whose latent keeps the agent on its chain with
probability 0.99 (reversed for the non-good chains); normal latents split
0.8/0.2 between two random states. Only the good chain's latent pays 1 at
the final step; every other latent pays a small dense reward.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from psrl.mdp import FeatureMap, SegmentModel


@dataclass
class LockTabularSpec:
    H: int = 5
    S: int = 10
    A: int = 2
    success: float = 0.98
    endpoint_rewards: Tuple[float, float] = (1.0, 0.25)
    sink_reward: Optional[float] = None  # defaults to 1/(8H)
    seed: int = 7

    def __post_init__(self):
        if self.S != 2 * self.H:
            raise ValueError(
                f"S={self.S} inconsistent with two (H-1)-chains + routing + sink (need S = 2H)"
            )
        if self.A < 2:
            raise ValueError("need at least 2 actions")
        if not 0.5 < self.success <= 1.0:
            raise ValueError("success probability should exceed 1/2")

    @property
    def sink_rate(self):
        return self.sink_reward if self.sink_reward is not None else 1.0 / (8.0 * self.H)


@dataclass
class LockLayout:
    routing: int
    chain_a: list
    chain_b: list
    sink: int
    correct_a: list  # correct action per chain-A state
    correct_b: list

    @property
    def endpoint_a(self):
        return self.chain_a[-1]

    @property
    def endpoint_b(self):
        return self.chain_b[-1]


def lock_layout(spec: LockTabularSpec) -> LockLayout:
    H = spec.H
    rng = np.random.default_rng(spec.seed)
    chain_a = list(range(1, H))
    chain_b = list(range(H, 2 * H - 1))
    correct_a = [int(rng.integers(spec.A)) for _ in chain_a]
    correct_b = [int(rng.integers(spec.A)) for _ in chain_b]
    return LockLayout(routing=0, chain_a=chain_a, chain_b=chain_b, sink=2 * H - 1,
                      correct_a=correct_a, correct_b=correct_b)


def build_bidirectional_lock(spec: LockTabularSpec = None) -> SegmentModel:
    spec = spec or LockTabularSpec()
    H, S, A = spec.H, spec.S, spec.A
    lay = lock_layout(spec)
    q = spec.success
    sink, routing = lay.sink, lay.routing
    r = np.zeros((H, S, A))
    P = np.zeros((H, S, A, S))

    # routing: action 0 favors chain A, every other action favors chain B
    P[:, routing, 0, lay.chain_a[0]] = q
    P[:, routing, 0, lay.chain_b[0]] = 1.0 - q
    for a in range(1, A):
        P[:, routing, a, lay.chain_a[0]] = 1.0 - q
        P[:, routing, a, lay.chain_b[0]] = q

    for chain, correct in ((lay.chain_a, lay.correct_a), (lay.chain_b, lay.correct_b)):
        for i, s in enumerate(chain):
            is_end = i == len(chain) - 1
            for a in range(A):
                if is_end:
                    P[:, s, a, sink] = 1.0
                elif a == correct[i]:
                    P[:, s, a, chain[i + 1]] = q
                    P[:, s, a, sink] = 1.0 - q
                else:
                    P[:, s, a, sink] = 1.0
                    r[:, s, a] = spec.sink_rate  # payment at the transition step
    P[:, sink, :, sink] = 1.0
    r[:, sink, :] = spec.sink_rate
    r[H - 1, lay.endpoint_a, :] = spec.endpoint_rewards[0]
    r[H - 1, lay.endpoint_b, :] = spec.endpoint_rewards[1]
    model = SegmentModel(r=r, P=P)
    model.validate()
    return model


def ps_endpoint_swap(model: SegmentModel) -> SegmentModel:
    """Exchange the two endpoint rewards; kernels are shared unchanged."""
    H = model.H
    final = model.r[H - 1, :, 0]
    order = np.argsort(final)
    ep_hi, ep_lo = int(order[-1]), int(order[-2])
    r = model.r.copy()
    r[H - 1, ep_hi, :] = model.r[H - 1, ep_lo, :]
    r[H - 1, ep_lo, :] = model.r[H - 1, ep_hi, :]
    return SegmentModel(r=r, P=model.P)


def drift_tabular(model: SegmentModel, t: int, T: int) -> SegmentModel:
    """Linearly morph the routing probabilities from (q, 1-q) at t=1 to
    (1-q, q) at t=T; kernels elsewhere and all rewards are unchanged."""
    if not 1 <= t <= T:
        raise ValueError("episode index out of range")
    H = model.H
    S = model.S
    routing = 0
    chain_a_first, chain_b_first = 1, H
    q0 = model.P[0, routing, 0, chain_a_first]
    lam = (t - 1.0) / (T - 1.0) if T > 1 else 0.0
    q_t = q0 + lam * ((1.0 - q0) - q0)
    P = model.P.copy()
    A = model.A
    P[:, routing, 0, chain_a_first] = q_t
    P[:, routing, 0, chain_b_first] = 1.0 - q_t
    for a in range(1, A):
        P[:, routing, a, chain_a_first] = 1.0 - q_t
        P[:, routing, a, chain_b_first] = q_t
    return SegmentModel(r=model.r, P=P)


@dataclass
class LockLinearSpec:
    S: int = 15
    A: int = 7
    H: int = 10
    d: int = 10
    n_chains: int = 5
    keep_prob: float = 0.99
    dense_range: Tuple[float, float] = (0.005, 0.008)
    split: Tuple[float, float] = (0.8, 0.2)
    seed: int = 11

    def __post_init__(self):
        if self.n_chains > self.S or self.n_chains > self.d:
            raise ValueError("need one special state and one latent per chain")
        if self.S <= self.n_chains:
            raise ValueError("need at least one normal state")
        if abs(sum(self.split) - 1.0) > 1e-12:
            raise ValueError("split must sum to 1")


@dataclass
class ChainLockStructure:
    latent: np.ndarray  # (S, A) latent index of each pair
    correct_actions: list  # per special state
    on_state: list  # special latent j stays at on_state[j]
    off_state: list  # and spills to off_state[j]
    normal_targets: list  # (u_j, v_j) per normal latent


def _chain_lock_structure(spec: LockLinearSpec, rng) -> ChainLockStructure:
    S, A, d, C = spec.S, spec.A, spec.d, spec.n_chains
    latent = np.zeros((S, A), dtype=np.int64)
    correct = [int(rng.integers(A)) for _ in range(C)]
    for i in range(C):
        for a in range(A):
            if a == correct[i]:
                latent[i, a] = i
            else:
                others = [j for j in range(d) if j != i]
                latent[i, a] = others[rng.integers(d - 1)]
    for s in range(C, S):
        latent[s] = rng.integers(d, size=A)
    normal_states = list(range(C, S))
    off_state = [normal_states[rng.integers(len(normal_states))] for _ in range(C)]
    normal_targets = []
    for _ in range(C, d):
        pick = rng.choice(S, size=2, replace=False)
        normal_targets.append((int(pick[0]), int(pick[1])))
    return ChainLockStructure(latent=latent, correct_actions=correct,
                              on_state=list(range(C)), off_state=off_state,
                              normal_targets=normal_targets)


def build_chain_lock(spec: LockLinearSpec = None):
    """Five base segment models (one per good chain) sharing a feature map.

    Only the linear parameters differ between bases: the good chain's latent
    keeps its chain with probability keep_prob (the others are reversed) and
    carries the terminal reward 1; all other latent coordinates carry dense
    rewards drawn i.i.d. from dense_range. Deterministic given the seed.
    """
    spec = spec or LockLinearSpec()
    rng = np.random.default_rng(spec.seed)
    S, A, H, d, C = spec.S, spec.A, spec.H, spec.d, spec.n_chains
    struct = _chain_lock_structure(spec, rng)
    dense = rng.uniform(*spec.dense_range, size=(d, H))

    table = np.zeros((S, A, d))
    for s in range(S):
        for a in range(A):
            table[s, a, struct.latent[s, a]] = 1.0
    fm = FeatureMap(table)

    bases = []
    for g in range(C):
        mu = np.zeros((H, d, S))
        for j in range(d):
            q = np.zeros(S)
            if j < C:
                keep = spec.keep_prob if j == g else 1.0 - spec.keep_prob
                q[struct.on_state[j]] = keep
                q[struct.off_state[j]] += 1.0 - keep
            else:
                u, v = struct.normal_targets[j - C]
                q[u] += spec.split[0]
                q[v] += spec.split[1]
            mu[:, j, :] = q
        theta = dense.T.copy()  # (H, d)
        theta[:, g] = 0.0
        theta[H - 1, g] = 1.0
        r = np.einsum("sad,hd->hsa", table, theta)
        P = np.einsum("sad,hdt->hsat", table, mu)
        seg = SegmentModel(r=r, P=P, theta=theta, mu=mu, features=fm)
        seg.validate()
        bases.append(seg)
    return bases, fm, struct
