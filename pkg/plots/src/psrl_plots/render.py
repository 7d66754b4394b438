"""Render harness result CSVs into per-(env, protocol) panels and a runtime
table.

Each panel plots one curve per algorithm: the mean of the chosen cumulative
metric across seeds, with a min-max band (or +-1 std behind a flag). The
runtime table mirrors the two-table layout: one block for tabular
environments, one for linear, reporting mean milliseconds per episode per
algorithm. Rendering is read-only and deterministic: rerunning on the same
inputs produces byte-identical files.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import List, Optional

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

REQUIRED_COLUMNS = [
    "run_id", "seed", "algorithm", "env", "protocol", "xi_or_drift", "t",
    "episode_reward", "cum_reward", "cum_regret", "probe_flag", "restart_flag",
    "restart_count", "detector_triggers_this_episode", "wall_ns",
]

METRICS = ("cum_reward", "cum_regret")

TABULAR_ENVS = {"bidirectional-lock", "tabular-hard"}
LINEAR_ENVS = {"chain-lock", "linear-hard"}

PNG_METADATA = {"Software": "psrl-plots"}  # pinned so output is byte-stable


class SchemaError(ValueError):
    pass


@dataclass
class PlotSpec:
    inputs: List[str]
    metric: str = "cum_reward"
    group: tuple = ("env", "protocol")
    band: str = "minmax"  # or "std"
    smooth: int = 0  # rolling-mean window in episodes; 0 disables
    out_dir: str = "figures"
    image_format: str = "png"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise SchemaError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.band not in ("minmax", "std"):
            raise SchemaError("band must be 'minmax' or 'std'")


def load_results(paths):
    frames = []
    for path in paths:
        df = pd.read_csv(path)
        missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r}")
        frames.append(df)
    if not frames:
        raise SchemaError("no input files")
    return pd.concat(frames, ignore_index=True)


def panel_curves(df, metric, smooth=0):
    """Per-algorithm curves for one panel's rows.

    Returns {algorithm: (t, mean, lo_minmax, hi_minmax, std)} with seeds
    aligned on t; the mean at each t is the across-seed column mean.
    """
    out = {}
    for algo in sorted(df["algorithm"].unique()):
        sub = df[df["algorithm"] == algo]
        wide = sub.pivot_table(index="t", columns="seed", values=metric)
        wide = wide.sort_index()
        if smooth and smooth > 1:
            wide = wide.rolling(smooth, min_periods=1).mean()
        t = wide.index.to_numpy()
        values = wide.to_numpy()
        out[algo] = (
            t,
            values.mean(axis=1),
            values.min(axis=1),
            values.max(axis=1),
            values.std(axis=1, ddof=0),
        )
    return out


def _safe_name(value):
    return re.sub(r"[^A-Za-z0-9.-]+", "_", str(value))


def render_panel(df, spec, keys, path):
    curves = panel_curves(df, spec.metric, spec.smooth)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    for algo, (t, mean, lo, hi, std) in curves.items():
        line, = ax.plot(t, mean, label=algo, linewidth=1.6)
        if spec.band == "minmax":
            ax.fill_between(t, lo, hi, alpha=0.2, color=line.get_color(), linewidth=0)
        else:
            ax.fill_between(t, mean - std, mean + std, alpha=0.2,
                            color=line.get_color(), linewidth=0)
    ax.set_xlabel("episode")
    ax.set_ylabel(spec.metric.replace("_", " "))
    ax.set_title(" / ".join(str(k) for k in keys))
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format=spec.image_format, metadata=PNG_METADATA)
    plt.close(fig)


def runtime_tables(df):
    """Markdown runtime blocks, tabular environments first then linear."""
    df = df.copy()
    df["wall_ms"] = df["wall_ns"] / 1e6

    def block(title, envs):
        sub = df[df["env"].isin(envs)]
        if sub.empty:
            return []
        per_algo = sub.groupby("algorithm")["wall_ms"].mean().sort_index()
        lines = [f"| {title} | ms/episode |", "| --- | --- |"]
        lines += [f"| {algo} | {ms:.4f} |" for algo, ms in per_algo.items()]
        return lines + [""]

    lines = []
    lines += block("Tabular MDP", TABULAR_ENVS)
    lines += block("Linear MDP", LINEAR_ENVS)
    other = set(df["env"].unique()) - TABULAR_ENVS - LINEAR_ENVS
    lines += block("Other", other)
    return "\n".join(lines).rstrip() + "\n"


def render(spec: PlotSpec):
    """Render all panels and the runtime table; returns written paths."""
    df = load_results(spec.inputs)
    os.makedirs(spec.out_dir, exist_ok=True)
    written = []
    group_cols = list(spec.group)
    for col in group_cols:
        if col not in df.columns:
            raise SchemaError(f"group column {col!r} not in the result schema")
    panels = sorted(df.groupby(group_cols).groups.keys())
    for keys in panels:
        keys_tuple = keys if isinstance(keys, tuple) else (keys,)
        mask = np.ones(len(df), dtype=bool)
        for col, val in zip(group_cols, keys_tuple):
            mask &= (df[col] == val).to_numpy()
        name = "panel_" + "_".join(_safe_name(k) for k in keys_tuple)
        path = os.path.join(spec.out_dir, f"{name}.{spec.image_format}")
        render_panel(df[mask], spec, keys_tuple, path)
        written.append(path)
    table_path = os.path.join(spec.out_dir, "runtime_table.md")
    with open(table_path, "w") as fh:
        fh.write(runtime_tables(df))
    written.append(table_path)
    return written
