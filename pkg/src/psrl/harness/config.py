"""Experiment configuration: a JSON-compatible dict validated key by key.

Unknown keys are rejected anywhere in the tree. `load_config` merges CLI
overrides on top of the file contents.
"""
from __future__ import annotations

import json

ENV_KINDS = {"bidirectional-lock", "chain-lock", "tabular-hard", "linear-hard"}
PROTOCOL_KINDS = {"ps-geometric", "ps-explicit", "drift"}
ALGO_KINDS = {"detect-restart", "periodic", "oracle-restart", "bare"}
LEARNER_KINDS = {"optimistic-q", "lsvi-ucb"}

_TOP_KEYS = {"env", "protocol", "episodes", "algorithms", "seeds", "regret_mode",
             "out_dir", "threads", "detector", "oracle_cadence"}
_ENV_KEYS = {"kind", "params"}
_PROTOCOL_KEYS = {"kind", "xi", "change_points", "window", "seed"}
_ALGO_KEYS = {"name", "kind", "learner", "learner_params", "detector",
              "alpha_floor", "probe", "window", "window_scale", "ref_actions"}
_DETECTOR_KEYS = {"divergence", "sigma2", "threshold_rule", "delta_fa", "delta_det",
                  "split_stride", "split_grid", "clamp_eps"}
_PROBE_KEYS = {"kind", "pairs", "order", "max_rank"}


class ConfigError(ValueError):
    pass


def _check_keys(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be an object")
    _check_keys(cfg, _TOP_KEYS, "top level")
    for key in ("env", "protocol", "episodes", "algorithms", "seeds"):
        if key not in cfg:
            raise ConfigError(f"missing required key {key!r}")

    env = cfg["env"]
    _check_keys(env, _ENV_KEYS, "env")
    if env.get("kind") not in ENV_KINDS:
        raise ConfigError(f"env.kind must be one of {sorted(ENV_KINDS)}")

    proto = cfg["protocol"]
    _check_keys(proto, _PROTOCOL_KEYS, "protocol")
    if proto.get("kind") not in PROTOCOL_KINDS:
        raise ConfigError(f"protocol.kind must be one of {sorted(PROTOCOL_KINDS)}")
    if proto["kind"] == "ps-geometric" and "xi" not in proto:
        raise ConfigError("ps-geometric protocol needs xi")
    if proto["kind"] == "ps-explicit" and "change_points" not in proto:
        raise ConfigError("ps-explicit protocol needs change_points")

    T = cfg["episodes"]
    if not isinstance(T, int) or T < 3:
        raise ConfigError("episodes must be an integer >= 3")

    algos = cfg["algorithms"]
    if not isinstance(algos, list) or not algos:
        raise ConfigError("algorithms must be a non-empty list")
    names = set()
    for algo in algos:
        _check_keys(algo, _ALGO_KEYS, f"algorithm {algo.get('name', '?')!r}")
        if algo.get("kind") not in ALGO_KINDS:
            raise ConfigError(f"algorithm kind must be one of {sorted(ALGO_KINDS)}")
        if algo.get("learner", "optimistic-q") not in LEARNER_KINDS:
            raise ConfigError(f"learner must be one of {sorted(LEARNER_KINDS)}")
        if "detector" in algo:
            _check_keys(algo["detector"], _DETECTOR_KEYS, "algorithm detector")
        if "probe" in algo:
            _check_keys(algo["probe"], _PROBE_KEYS, "algorithm probe")
        name = algo.get("name") or algo["kind"]
        if name in names:
            raise ConfigError(f"duplicate algorithm name {name!r}")
        names.add(name)

    if "detector" in cfg:
        _check_keys(cfg["detector"], _DETECTOR_KEYS, "detector")
    seeds = cfg["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list")
    if cfg.get("regret_mode", "expected") not in ("expected", "realized"):
        raise ConfigError("regret_mode must be 'expected' or 'realized'")
    if cfg.get("oracle_cadence", "auto") not in ("auto", "episode", "window"):
        raise ConfigError("oracle_cadence must be auto, episode or window")
    return cfg


def load_config(path, overrides=None):
    with open(path) as fh:
        cfg = json.load(fh)
    if overrides:
        cfg.update({k: v for k, v in overrides.items() if v is not None})
    return validate_config(cfg)
