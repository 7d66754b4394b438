"""Minimax hard-instance generators with validity checks.

Tabular family: a waiting state, an A-ary tree, and two absorbing states;
in each stationary segment exactly one leaf triple carries a small bias
toward the good absorbing state, and flagged segments boost a second
(pluggable) triple to double bias. Linear family: a chain whose jump
probability to the rewarding absorbing state is linear in {-1,+1}^(d-1)
actions with a per-segment sign pattern.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from psrl.envs.schedules import evenly_spaced_changepoints
from psrl.mdp import FeatureMap, MDPDims, PSModel, SegmentModel


def tree_depth_for(S, A):
    """Integer D with S - 3 = (A^D - 1)/(A - 1), or None."""
    target = S - 3
    total, depth = 0, 0
    power = 1
    while total < target:
        total += power
        power *= A
        depth += 1
        if total == target:
            return depth
    return None


@dataclass
class TreeLayout:
    waiting: int
    root: int
    depth: int  # tree depth D: levels 0..D-1, leaves at level D-1
    level_start: list
    leaves: list
    good: int
    bad: int


def _tree_layout(S, A, D):
    level_start = []
    idx = 1
    for j in range(D):
        level_start.append(idx)
        idx += A ** j
    leaves = list(range(level_start[-1], level_start[-1] + A ** (D - 1)))
    return TreeLayout(waiting=0, root=1, depth=D, level_start=level_start,
                      leaves=leaves, good=S - 2, bad=S - 1)


def _child_state(layout, A, node, a):
    for j, start in enumerate(layout.level_start):
        width = A ** j
        if start <= node < start + width:
            if j == layout.depth - 1:
                raise ValueError("leaves have no children")
            return layout.level_start[j + 1] + (node - start) * A + a
    raise ValueError("not a tree node")


def default_tilde_rule(k, depth, n_leaves, n_actions):
    """Deterministic boosted triple: first leaf, lowest non-good action, at
    the earliest step a leaf is reachable. Weaker than an adversarial
    least-visited choice but concrete and policy-independent."""
    return (depth, 0, 1)


def segment_bias(length, A, n_leaves, waiting_steps):
    """Per-segment bias epsilon = (16 + 8 len / (A L Hbar - 1))^(-1/2)."""
    return (16.0 + 8.0 * length / (A * n_leaves * waiting_steps - 1.0)) ** -0.5


def build_tabular_hard_instance(S, A, H, n_changes, T, bits=None,
                                tilde_rule: Optional[Callable] = None):
    """Piecewise-stationary tree instance indexed by a boost-bit vector.

    bits: length n_changes+1 in {0,1}; segment k with bits[k] = 1 boosts the
    tilde triple to double bias. Change points are evenly spaced. Rewards
    are deterministic: 1 at the good absorbing state late in the episode.
    """
    if S < 6 or A < 2:
        raise ValueError("need S >= 6 and A >= 2")
    D = tree_depth_for(S, A)
    if D is None:
        raise ValueError(f"S={S}, A={A} admit no integer tree depth")
    if H < 3 * D:
        raise ValueError("need H >= 3 D")
    if T < n_changes + 1:
        raise ValueError("need at least one episode per segment")
    if bits is None:
        bits = [0] * (n_changes + 1)
    bits = [int(b) for b in bits]
    if len(bits) != n_changes + 1 or any(b not in (0, 1) for b in bits):
        raise ValueError("bits must be 0/1 of length n_changes + 1")
    if tilde_rule is None:
        tilde_rule = default_tilde_rule

    layout = _tree_layout(S, A, D)
    waiting_steps = H // 3  # episodes wait here before the tree opens
    n_leaves = A ** (D - 1)
    reward_start = waiting_steps + D  # 0-based step where the good state pays

    r = np.zeros((H, S, A))
    r[reward_start:, layout.good, :] = 1.0

    def base_kernel():
        P = np.zeros((H, S, A, S))
        w = layout.waiting
        P[:, w, 0, layout.root] = 1.0  # leave action
        for a in range(1, A):
            P[:, w, a, w] = 1.0
        P[waiting_steps - 1, w, :, :] = 0.0
        P[waiting_steps - 1, w, :, layout.root] = 1.0  # forced out
        for j in range(D - 1):
            start = layout.level_start[j]
            for node in range(start, start + A ** j):
                for a in range(A):
                    P[:, node, a, _child_state(layout, A, node, a)] = 1.0
        for leaf in layout.leaves:
            P[:, leaf, :, layout.good] = 0.5
            P[:, leaf, :, layout.bad] = 0.5
        P[:, layout.good, :, layout.good] = 1.0
        P[:, layout.bad, :, layout.bad] = 1.0
        return P

    nus = evenly_spaced_changepoints(T, n_changes)
    bounds = np.concatenate(([1], nus, [T + 1]))
    segments = []
    epsilons = []
    for k in range(n_changes + 1):
        length = int(bounds[k + 1] - bounds[k])
        eps = segment_bias(length, A, n_leaves, waiting_steps)
        if eps > 0.25 + 1e-12:
            raise ValueError("bias exceeds 1/4")
        epsilons.append(eps)
        P = base_kernel()
        good_leaf = layout.leaves[0]
        P[D, good_leaf, 0, layout.good] = 0.5 + eps
        P[D, good_leaf, 0, layout.bad] = 0.5 - eps
        if bits[k]:
            th, tleaf, ta = tilde_rule(k, D, n_leaves, A)
            if (th, tleaf, ta) == (D, 0, 0):
                raise ValueError("boosted triple must differ from the base triple")
            boosted = layout.leaves[tleaf]
            P[th, boosted, ta, layout.good] = 0.5 + 2.0 * eps
            P[th, boosted, ta, layout.bad] = 0.5 - 2.0 * eps
        seg = SegmentModel(r=r, P=P)
        seg.validate()
        segments.append(seg)

    dims = MDPDims(S=S, A=A, H=H, T=T, d=S * A)
    model = PSModel(dims=dims, change_points=nus, segments=segments,
                    initial_states=layout.waiting, reward_noise="deterministic")
    model.epsilons = epsilons
    model.layout = layout
    return model


def hypercube_actions(d):
    """All sign vectors in {-1,+1}^(d-1), lexicographic, as a (A, d-1) array."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=d - 1)))


def jump_amplitude(d, H, T, n_changes):
    return math.sqrt((n_changes + 1.0) / (H * T)) / (4.0 * math.sqrt(2.0))


def build_linear_hard_instance(d, H, T, n_changes, sign_vectors=None, seed=0):
    """Chain instance whose jump probability is linear in the action vector.

    States x_1..x_H, one absorbing dead end and one absorbing rewarding
    state; actions are {-1,+1}^(d-1). In segment k at step h < H/2 the jump
    probability is 1/H + <mu_h^(k), a> with mu entries +-Delta; later steps
    have no action effect. Returns (model, feature_map) where the feature
    map (1, a)/sqrt(d) carries the action-side linear structure monitored by
    probes (the full kernel is a mixture construction, so no per-state
    linear parameters are attached).
    """
    if d < 4 or H < 4 or H % 2:
        raise ValueError("need d >= 4 and even H >= 4")
    bound = (d - 1) ** 2 * H * (n_changes + 1) / 8.0
    if T < bound:
        raise ValueError(f"need T >= (d-1)^2 H (N+1)/8 = {bound}")
    actions = hypercube_actions(d)
    A = actions.shape[0]
    S = H + 2
    delta = jump_amplitude(d, H, T, n_changes)
    iota = 1.0 / H
    if sign_vectors is None:
        rng = np.random.default_rng(seed)
        sign_vectors = rng.choice((-1.0, 1.0), size=(n_changes + 1, H // 2, d - 1))
    sign_vectors = np.asarray(sign_vectors, dtype=np.float64)
    if sign_vectors.shape != (n_changes + 1, H // 2, d - 1):
        raise ValueError("sign vectors must have shape (segments, H/2, d-1)")

    dead, goal = H, H + 1
    r = np.zeros((H, S, A))
    r[:, goal, :] = 1.0
    nus = evenly_spaced_changepoints(T, n_changes)
    segments = []
    for k in range(n_changes + 1):
        P = np.zeros((H, S, A, S))
        for h in range(H):
            if h < H // 2:
                jump = iota + delta * (actions @ sign_vectors[k, h])
            else:
                jump = np.full(A, iota)
            if np.any(jump < iota / 2 - 1e-12) or np.any(jump > 1.5 * iota + 1e-12):
                raise ValueError("jump probabilities left [iota/2, 3 iota/2]")
            for j in range(H):
                nxt = j + 1 if j + 1 < H else dead
                P[h, j, :, goal] = jump
                P[h, j, :, nxt] = 1.0 - jump
        P[:, dead, :, dead] = 1.0
        P[:, goal, :, goal] = 1.0
        seg = SegmentModel(r=r, P=P)
        seg.validate()
        segments.append(seg)

    table = np.concatenate([np.ones((A, 1)), actions], axis=1) / math.sqrt(d)
    fm = FeatureMap(np.tile(table[None, :, :], (S, 1, 1)))
    dims = MDPDims(S=S, A=A, H=H, T=T, d=d)
    model = PSModel(dims=dims, change_points=nus, segments=segments,
                    initial_states=0, reward_noise="deterministic")
    model.amplitude = delta
    model.base_jump = iota
    return model, fm
