"""Run-matrix execution: build environments and agents per cell, run the
episode loop with per-episode regret accounting, stream rows to CSV.

Each (algorithm, seed) cell is independent; the environment realization for
a given seed is shared across algorithms so comparisons are paired. All
derived seeds come from sha256 of the run identity, so reruns are
byte-identical.
"""
from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from psrl.baselines import BareAgent, OracleRestartAgent, PeriodicRestartAgent, budget_window
from psrl.detect import DetectorConfig
from psrl.envs import (
    DriftEnvironment,
    LockLinearSpec,
    LockTabularSpec,
    PSEnvironment,
    build_bidirectional_lock,
    build_chain_lock,
    build_linear_hard_instance,
    build_tabular_hard_instance,
    drift_linear,
    drift_tabular,
    ps_chain_switch,
    ps_lock_alternation,
    sample_geometric_changepoints,
)
from psrl.learners import make_learner
from psrl.mdp import RunTrace, one_hot_feature_map, optimal_values, policy_values, simulate_episode
from psrl.probes import ProbeCollection, ProbeSlice, greedy_probe_selection, tabular_probes
from psrl.wrappers import DetectionRestartAgent, ProbeSchedule

RESULT_COLUMNS = [
    "run_id", "seed", "algorithm", "env", "protocol", "xi_or_drift", "t",
    "episode_reward", "cum_reward", "cum_regret", "probe_flag", "restart_flag",
    "restart_count", "detector_triggers_this_episode", "wall_ns",
]


def derive_seed(*parts):
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class RunSpec:
    run_id: str
    env_kind: str
    protocol_tag: str
    xi_or_drift: str
    algo: dict
    seed: int


def expand_cells(cfg):
    env_kind = cfg["env"]["kind"]
    proto = cfg["protocol"]
    if proto["kind"] == "ps-geometric":
        tag, xi = f"ps-xi{proto['xi']}", str(proto["xi"])
    elif proto["kind"] == "ps-explicit":
        tag, xi = "ps-explicit", "explicit"
    else:
        tag, xi = "drift", "drift"
    cells = []
    for algo in cfg["algorithms"]:
        name = algo.get("name") or algo["kind"]
        for seed in cfg["seeds"]:
            run_id = f"{env_kind}__{tag}__{name}__s{seed}"
            cells.append(RunSpec(run_id=run_id, env_kind=env_kind, protocol_tag=tag,
                                 xi_or_drift=xi, algo=algo, seed=seed))
    return cells


# -- environment construction -------------------------------------------------


def _change_points(proto, T, seed):
    if proto["kind"] == "ps-explicit":
        return np.asarray(proto["change_points"], dtype=np.int64)
    rng = np.random.default_rng(derive_seed("protocol", proto.get("seed", 0), seed))
    return sample_geometric_changepoints(T, proto["xi"], rng)


def build_environment(cfg, seed):
    """Environment for one run; identical across algorithms at a given seed."""
    env_cfg, proto, T = cfg["env"], cfg["protocol"], cfg["episodes"]
    kind = env_cfg["kind"]
    params = dict(env_cfg.get("params", {}))

    if kind == "bidirectional-lock":
        spec = LockTabularSpec(**{k: v for k, v in params.items()
                                  if k in ("H", "S", "A", "success", "seed")})
        base = build_bidirectional_lock(spec)
        if proto["kind"] == "drift":
            env = DriftEnvironment(
                dims=_lock_dims(base, T), morph=lambda t: drift_tabular(base, t, T),
                T=T, kind=kind, family="tabular", initial_states=0,
                reward_noise="deterministic", oracle_cadence="episode")
        else:
            nus = _change_points(proto, T, seed)
            env = PSEnvironment(ps_lock_alternation(base, nus, T), kind=kind,
                                family="tabular")
        env.feature_map = one_hot_feature_map(base.S, base.A)
        return env

    if kind == "chain-lock":
        spec = LockLinearSpec(**{k: v for k, v in params.items()
                                 if k in ("S", "A", "H", "d", "n_chains", "keep_prob", "seed")})
        bases, fm, struct = build_chain_lock(spec)
        if proto["kind"] == "drift":
            cadence = cfg.get("oracle_cadence", "auto")
            env = drift_linear(bases, T, window=proto.get("window", 100),
                               seed=derive_seed("drift-order", proto.get("seed", 0), seed),
                               oracle_cadence="window" if cadence in ("auto", "window") else "episode")
        else:
            nus = _change_points(proto, T, seed)
            env = PSEnvironment(
                ps_chain_switch(bases, nus, T,
                                seed=derive_seed("goods", proto.get("seed", 0), seed)),
                kind=kind, family="linear")
        env.feature_map = fm
        env.chain_structure = struct
        return env

    if kind == "tabular-hard":
        nus_n = len(_change_points(proto, T, seed)) if proto["kind"] != "drift" else 0
        model = build_tabular_hard_instance(
            S=params.get("S", 6), A=params.get("A", 2), H=params.get("H", 6),
            n_changes=params.get("n_changes", nus_n), T=T,
            bits=params.get("bits"))
        env = PSEnvironment(model, kind=kind, family="tabular")
        env.feature_map = one_hot_feature_map(model.dims.S, model.dims.A)
        return env

    if kind == "linear-hard":
        model, fm = build_linear_hard_instance(
            d=params.get("d", 4), H=params.get("H", 4), T=T,
            n_changes=params.get("n_changes", 1), seed=params.get("seed", 0))
        env = PSEnvironment(model, kind=kind, family="linear")
        env.feature_map = fm
        return env

    raise ValueError(f"unknown environment kind {kind!r}")


def _lock_dims(base, T):
    from psrl.mdp import MDPDims

    return MDPDims(S=base.S, A=base.A, H=base.H, T=T, d=base.S * base.A)


# -- probes and agents --------------------------------------------------------


def _uniform_occupancy(env):
    """State occupancies per step under the uniform random policy, from the
    first episode's model and initial distribution."""
    seg = env.model_at(1)
    dist = env.initial_distribution(0)
    out = []
    for h in range(seg.H):
        out.append(dist.copy())
        dist = np.einsum("s,sat->t", dist, seg.P[h]) / seg.A
    return out


def build_probes(env, probe_cfg):
    dims = env.dims
    kind = (probe_cfg or {}).get("kind", "tabular-full" if env.family == "tabular" else "greedy")
    if kind == "tabular-full":
        return tabular_probes(dims.S, dims.A, dims.H)
    if kind == "pairs":
        slices = []
        pairs_by_step = {int(k): v for k, v in probe_cfg["pairs"].items()}
        for h in range(dims.H):
            pairs = [tuple(map(int, p)) for p in pairs_by_step.get(h, [])]
            if pairs:
                slices.append(greedy_probe_selection(env.feature_map, pairs, h))
            else:
                slices.append(ProbeSlice(h=h, pairs=[], rank=0))
        return ProbeCollection(slices)
    if kind == "greedy":
        order = (probe_cfg or {}).get("order", "lex")
        max_rank = (probe_cfg or {}).get("max_rank")
        occ = _uniform_occupancy(env)
        slices = []
        for h in range(dims.H):
            cands = [(s, a) for s in range(dims.S) if occ[h][s] > 0.0
                     for a in range(dims.A)]
            if order == "occupancy":
                cands.sort(key=lambda sa: (-occ[h][sa[0]], sa[0], sa[1]))
            slices.append(greedy_probe_selection(env.feature_map, cands, h,
                                                 max_rank=max_rank))
        return ProbeCollection(slices)
    if kind == "chain-special":
        # one probed pair per special chain state (its on-chain action), at
        # every step: the frozen learned policy sits on the good chain, so
        # these streams fill quickly and the forced action matches the
        # policy's own choice
        struct = env.chain_structure
        pairs = [(s, struct.correct_actions[s]) for s in struct.on_state]
        slices = [greedy_probe_selection(env.feature_map, pairs, h)
                  for h in range(dims.H)]
        return ProbeCollection(slices)
    raise ValueError(f"unknown probe kind {kind!r}")


def default_detector(cfg, T):
    base = dict(divergence="bernoulli", threshold_rule="experimental",
                delta_fa=1.0 / math.sqrt(T), delta_det=1.0 / math.sqrt(T),
                split_stride=1, split_grid="stride", clamp_eps=1e-6)
    base.update(cfg.get("detector", {}))
    return base


def build_agent(cfg, env, algo, seed):
    dims = env.dims
    learner_kind = algo.get("learner", "optimistic-q")
    learner_seed = derive_seed("learner", algo.get("name", algo["kind"]), seed)
    learner = make_learner(learner_kind, dims, feature_map=getattr(env, "feature_map", None),
                           seed=learner_seed, **algo.get("learner_params", {}))
    kind = algo["kind"]
    if kind == "bare":
        return BareAgent(learner)
    if kind == "periodic":
        if "window" in algo:
            window = int(algo["window"])
        else:
            n_changes = len(env.change_points)
            window = budget_window(dims.T, n_changes, algo.get("window_scale", 1.0))
        return PeriodicRestartAgent(learner, window, dims.T)
    if kind == "oracle-restart":
        return OracleRestartAgent(learner, env.change_points)
    if kind == "detect-restart":
        det_cfg = default_detector(cfg, dims.T)
        det_cfg.update(algo.get("detector", {}))
        detector = DetectorConfig(**det_cfg)
        sched = ProbeSchedule(d=dims.d, H=dims.H, T=dims.T,
                              floor=algo.get("alpha_floor"))
        probes = build_probes(env, algo.get("probe"))
        return DetectionRestartAgent(
            learner, probes, env.feature_map, dims, detector, sched,
            seed=derive_seed("wrapper", algo.get("name", kind), seed),
            ref_actions=algo.get("ref_actions"))
    raise ValueError(f"unknown algorithm kind {kind!r}")


# -- the episode loop ---------------------------------------------------------


class EnvOracle:
    """Optimal start values, recomputed only when the oracle key changes."""

    def __init__(self, env):
        self.env = env
        self._tables = {}
        self.calls = 0

    def table(self, t):
        key = self.env.oracle_key(t)
        if key not in self._tables:
            self._tables[key] = optimal_values(self.env.model_at(t))
            self.calls += 1
        return self._tables[key]

    def start_value(self, t, s1):
        return float(self.table(t).V[0, int(s1)])


@dataclass
class RunResult:
    spec: RunSpec
    trace: RunTrace
    oracle_calls: int = 0
    oracle_exact: bool = True
    regret_mode: str = "expected"
    error: str = ""

    def final_cum_reward(self):
        return self.trace.cum_reward[-1]

    def final_cum_regret(self):
        return self.trace.cum_regret[-1]


def run_single(cfg, spec: RunSpec):
    env = build_environment(cfg, spec.seed)
    agent = build_agent(cfg, env, spec.algo, spec.seed)
    T = cfg["episodes"]
    regret_mode = cfg.get("regret_mode", "expected")
    env_rng = np.random.default_rng(derive_seed("env-rng", spec.run_id))
    oracle = EnvOracle(env)
    trace = RunTrace()
    for t in range(1, T + 1):
        seg = env.model_at(t)
        s1 = env.initial_state(t, env_rng)
        tic = time.perf_counter_ns()
        agent.begin_episode(t)
        rec = simulate_episode(env, t, agent, env_rng, s1=s1)
        events = agent.end_episode(t)
        if regret_mode == "expected":
            agent_value = float(policy_values(seg, agent.episode_policy()).V[0, s1])
        else:
            agent_value = rec.total_reward
        wall = time.perf_counter_ns() - tic
        trace.append(
            segment=env.oracle_key(t), is_probe=events.is_probe,
            restart=events.restarted, restart_reason=events.restart_reason,
            restart_count=events.restart_count, triggers=len(events.triggers),
            episode_reward=rec.total_reward, oracle_value=oracle.start_value(t, s1),
            agent_value=agent_value, start_state=s1, wall_ns=wall)
    return RunResult(spec=spec, trace=trace, oracle_calls=oracle.calls,
                     oracle_exact=env.oracle_exact, regret_mode=regret_mode)


def result_rows(result: RunResult):
    spec = result.spec
    tr = result.trace
    rows = []
    for i in range(len(tr)):
        rows.append([
            spec.run_id, str(spec.seed), spec.algo.get("name") or spec.algo["kind"],
            spec.env_kind, spec.protocol_tag, spec.xi_or_drift, str(i + 1),
            repr(tr.episode_reward[i]), repr(tr.cum_reward[i]), repr(tr.cum_regret[i]),
            str(int(tr.is_probe[i])), str(int(tr.restart[i])),
            str(tr.restart_count[i]), str(tr.triggers[i]), str(tr.wall_ns[i]),
        ])
    return rows


def _run_cell_entry(args):
    cfg, spec = args
    try:
        result = run_single(cfg, spec)
        return spec.run_id, result, ""
    except Exception as exc:  # cell failures abort the cell, not the matrix
        return spec.run_id, None, f"{type(exc).__name__}: {exc}"


def expand_and_run(cfg, threads=None):
    """Run every cell; returns (results dict keyed by run_id, failures dict)."""
    cells = expand_cells(cfg)
    threads = threads if threads is not None else cfg.get("threads", 1)
    results, failures = {}, {}
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(_run_cell_entry, [(cfg, spec) for spec in cells]))
    else:
        outs = [_run_cell_entry((cfg, spec)) for spec in cells]
    for run_id, result, err in outs:
        if err:
            failures[run_id] = err
        else:
            results[run_id] = result
    return cells, results, failures
