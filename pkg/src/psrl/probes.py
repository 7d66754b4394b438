"""Probe collections: per-step sets of (state, action) pairs with linearly
independent features, plus identifiability checks, separation-length
diagnostics and reachability estimation under the uniform probing policy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

RANK_TOL = 1e-9
DETECT_TOL = 1e-9

DETECTABLE = "detectable"
INVISIBLE = "invisible"


@dataclass
class ProbeSlice:
    """Probed (state, action) pairs for one step, with their feature rank."""

    h: int
    pairs: List[Tuple[int, int]]
    rank: int

    def states(self):
        seen = []
        for s, _ in self.pairs:
            if s not in seen:
                seen.append(s)
        return seen

    def actions_for(self, s):
        return [a for (ss, a) in self.pairs if ss == s]

    def support(self):
        """Dict state -> probed action list."""
        out = {}
        for s, a in self.pairs:
            out.setdefault(s, []).append(a)
        return out

    def feature_matrix(self, feature_map):
        if not self.pairs:
            return np.zeros((0, feature_map.d))
        return np.stack([feature_map.vector(s, a) for s, a in self.pairs])

    def validate(self, feature_map, tol=RANK_TOL):
        mat = self.feature_matrix(feature_map)
        r = int(np.linalg.matrix_rank(mat, tol=tol)) if len(self.pairs) else 0
        if r != len(self.pairs) or r != self.rank:
            raise ValueError(
                f"slice at step {self.h}: rank {r} != recorded {self.rank} "
                f"or pairs not independent"
            )
        if self.rank > feature_map.d:
            raise ValueError("rank cannot exceed the feature dimension")


@dataclass
class ProbeCollection:
    slices: List[ProbeSlice]
    _supports: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._supports = [sl.support() for sl in self.slices]

    @property
    def H(self):
        return len(self.slices)

    @property
    def total_pairs(self):
        return sum(len(sl.pairs) for sl in self.slices)

    @property
    def N_e(self):
        """Largest probed action set over all (step, state)."""
        best = 1
        for sup in self._supports:
            for acts in sup.values():
                best = max(best, len(acts))
        return best

    def support(self, h):
        return self._supports[h]

    def probe_actions(self, h, s):
        return self._supports[h].get(s)

    def reward_keys(self):
        for sl in self.slices:
            for s, a in sl.pairs:
                yield (s, a, sl.h)

    def validate(self, feature_map, tol=RANK_TOL):
        for sl in self.slices:
            sl.validate(feature_map, tol)
        if self.total_pairs > feature_map.d * self.H:
            raise ValueError("collection exceeds the d*H size bound")


def tabular_probes(S, A, H):
    """Full probing: under one-hot features maximal coverage needs every
    (state, action) pair at every step, so each slice has rank S*A."""
    pairs = [(s, a) for s in range(S) for a in range(A)]
    return ProbeCollection([ProbeSlice(h=h, pairs=list(pairs), rank=S * A) for h in range(H)])


def greedy_probe_selection(feature_map, candidates, h, tol=RANK_TOL, max_rank=None):
    """Scan candidates in order, keeping a pair iff its feature strictly
    increases the rank of the kept set (Gram-Schmidt with a pivot tolerance).

    Stops at rank d (or max_rank) or the end of the list.
    """
    if max_rank is None:
        max_rank = feature_map.d
    basis = []  # orthonormal
    kept = []
    for s, a in candidates:
        v = feature_map.vector(s, a).astype(np.float64).copy()
        for q in basis:
            v -= (q @ v) * q
        nrm = float(np.linalg.norm(v))
        if nrm > tol:
            basis.append(v / nrm)
            kept.append((int(s), int(a)))
            if len(kept) >= max_rank:
                break
    return ProbeSlice(h=h, pairs=kept, rank=len(kept))


def check_reward_identifiability(slice_, feature_map, delta, tol=DETECT_TOL):
    """Is a reward-parameter difference visible on the probed pairs?

    Detectable iff some probed pair has |phi(s,a)^T delta| > tol, i.e. delta
    has a nonzero projection onto the span of the probed features.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if np.linalg.norm(delta) == 0.0:
        raise ValueError("delta must be nonzero")
    mat = slice_.feature_matrix(feature_map)
    if mat.shape[0] and np.max(np.abs(mat @ delta)) > tol:
        return DETECTABLE
    return INVISIBLE


def expected_successor_features(segment, feature_map, h, s, a, ref_action):
    """E[phi(s', ref_action)] for s' ~ P_h(.|s, a), from materialized kernels."""
    return segment.P[h, s, a] @ feature_map.table[:, ref_action, :]


def check_transition_identifiability(slice_, feature_map, segment_a, segment_b,
                                     ref_actions=None, tol=DETECT_TOL):
    """Is a kernel change visible through successor-feature means?

    For each probed (s, a), reference action a' and coordinate j, compares
    E[phi(s', a')]_j under both segments; detectable iff any difference
    exceeds tol. Both segments must share the feature map.
    """
    if ref_actions is None:
        ref_actions = range(segment_a.A)
    h = slice_.h
    for s, a in slice_.pairs:
        for a2 in ref_actions:
            ea = expected_successor_features(segment_a, feature_map, h, s, a, a2)
            eb = expected_successor_features(segment_b, feature_map, h, s, a, a2)
            if np.max(np.abs(ea - eb)) > tol:
                return DETECTABLE
    return INVISIBLE


def _separation_inner(samples_needed, p_min, N_e, T):
    ln_t = math.log(T)
    return (
        samples_needed * N_e / p_min
        + N_e ** 2 * ln_t / (4.0 * p_min ** 2)
        + math.sqrt(
            samples_needed * ln_t * N_e ** 3 / (2.0 * p_min ** 3)
            + ln_t ** 2 * N_e ** 4 / (16.0 * p_min ** 4)
        )
    )


@dataclass
class SeparationReport:
    """Minimum segment lengths needed for reliable detection, per segment.

    m_k covers the pre-change window, l_k the post-change latency; both are
    integer multiples of the probing period ceil(1/alpha_k). Flags say
    whether the supplied change points are spaced widely enough. Diagnostic
    only: runs proceed regardless.
    """

    m_detector: int
    l_detector: int
    p_min: float
    N_e: int
    T: int
    change_points: list
    alphas: list
    m_k: list
    l_k: list
    first_gap_ok: bool
    gap_ok: list

    def all_ok(self):
        return self.first_gap_ok and all(self.gap_ok)

    def to_dict(self):
        return {
            "m_detector": self.m_detector,
            "l_detector": self.l_detector,
            "p_min": self.p_min,
            "N_e": self.N_e,
            "T": self.T,
            "change_points": list(map(int, self.change_points)),
            "alphas": list(map(float, self.alphas)),
            "m_k": list(map(int, self.m_k)),
            "l_k": list(map(int, self.l_k)),
            "first_gap_ok": bool(self.first_gap_ok),
            "gap_ok": list(map(bool, self.gap_ok)),
        }


def separation_requirements(alphas, m_detector, l_detector, p_min, N_e, T, change_points):
    """Compute the per-segment separation lengths and spacing flags.

    alphas: callable k -> frequency in (0, 1], or a sequence indexed from
    segment 1. change_points: the true change episodes nu_1 < ... < nu_N.
    """
    if not 0.0 < p_min <= 1.0:
        raise ValueError("p_min must lie in (0, 1]")
    if N_e < 1:
        raise ValueError("N_e must be >= 1")
    nus = list(map(int, change_points))
    n = len(nus)
    get_alpha = alphas if callable(alphas) else (lambda k: alphas[k - 1])
    a_list, m_list, l_list = [], [], []
    for k in range(1, n + 1):
        a = float(get_alpha(k))
        if not 0.0 < a <= 1.0:
            raise ValueError("alpha values must lie in (0, 1]")
        period = math.ceil(1.0 / a)
        m_list.append(period * math.ceil(_separation_inner(m_detector, p_min, N_e, T)))
        l_list.append(period * math.ceil(_separation_inner(l_detector, p_min, N_e, T)))
        a_list.append(a)
    first_ok = (nus[0] >= m_list[0]) if n else True
    gaps = [nus[k] - nus[k - 1] >= l_list[k - 1] + m_list[k] for k in range(1, n)]
    return SeparationReport(
        m_detector=m_detector, l_detector=l_detector, p_min=p_min, N_e=N_e, T=T,
        change_points=nus, alphas=a_list, m_k=m_list, l_k=l_list,
        first_gap_ok=first_ok, gap_ok=gaps,
    )


@dataclass
class ReachabilityReport:
    """Occupancies under the uniform probing policy, per (segment, step)."""

    occupancy: list  # occupancy[k][h] is a (S,) distribution
    p_min: float
    reachable: bool  # every probed state has positive occupancy

    def occ(self, segment, h):
        return self.occupancy[segment][h]


def uniform_probe_policy(probes, S, A, h):
    """Action distributions of the uniform probing policy at step h."""
    pol = np.full((S, A), 1.0 / A)
    sup = probes.support(h)
    for s, acts in sup.items():
        pol[s] = 0.0
        pol[s, acts] = 1.0 / len(acts)
    return pol


def estimate_reachability(model, probes):
    """Exact forward propagation of the state distribution under the uniform
    probing policy from each segment's initial distribution.

    p_min is the smallest occupancy over all (segment, step, probed state);
    `reachable` flags whether it is strictly positive.
    """
    S, A, H = model.dims.S, model.dims.A, model.dims.H
    occupancy = []
    p_min = math.inf
    for k, segment in enumerate(model.segments):
        dist = model.initial_distribution(k)
        per_step = []
        for h in range(H):
            per_step.append(dist.copy())
            pol = uniform_probe_policy(probes, S, A, h)
            flow = np.einsum("s,sa,sat->t", dist, pol, segment.P[h])
            dist = flow
        occupancy.append(per_step)
        for h in range(H):
            for s in probes.support(h):
                p_min = min(p_min, per_step[h][s])
    if not math.isfinite(p_min):
        p_min = 0.0  # no probed states at all
    return ReachabilityReport(occupancy=occupancy, p_min=float(p_min),
                              reachable=p_min > 0.0)
