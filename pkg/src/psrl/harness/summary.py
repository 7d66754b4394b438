"""Aggregation of run results into summary tables and CSV/manifest output."""
from __future__ import annotations

import csv
import json
import os
from collections import defaultdict

import numpy as np

from psrl.harness.runner import RESULT_COLUMNS, result_rows

SUMMARY_COLUMNS = [
    "env", "protocol", "xi_or_drift", "algorithm", "n_seeds",
    "final_cum_reward_mean", "final_cum_reward_std",
    "final_cum_regret_mean", "final_cum_regret_std",
    "wall_ms_per_episode_mean", "restarts_mean",
]


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def summarize_results(results):
    """Per-cell aggregates across seeds from in-memory RunResults."""
    cells = defaultdict(list)
    for result in results.values():
        spec = result.spec
        key = (spec.env_kind, spec.protocol_tag, spec.xi_or_drift,
               spec.algo.get("name") or spec.algo["kind"])
        cells[key].append(result)
    rows = []
    for key in sorted(cells):
        group = cells[key]
        rew_m, rew_s = _mean_std([r.final_cum_reward() for r in group])
        reg_m, reg_s = _mean_std([r.final_cum_regret() for r in group])
        wall_m, _ = _mean_std([np.mean(r.trace.wall_ns) / 1e6 for r in group])
        restarts_m, _ = _mean_std([r.trace.restart_count[-1] for r in group])
        rows.append(dict(zip(SUMMARY_COLUMNS, [
            key[0], key[1], key[2], key[3], len(group),
            rew_m, rew_s, reg_m, reg_s, wall_m, restarts_m,
        ])))
    return rows


def summarize_csv_files(paths):
    """Same aggregation from result CSV files (also accepts external
    baseline results that follow the schema, keyed by algorithm name)."""
    per_run = {}
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                rid = row["run_id"]
                entry = per_run.setdefault(rid, {
                    "key": (row["env"], row["protocol"], row["xi_or_drift"], row["algorithm"]),
                    "last_t": -1,
                })
                t = int(row["t"])
                entry.setdefault("wall", []).append(int(row["wall_ns"]))
                if t > entry["last_t"]:
                    entry["last_t"] = t
                    entry["final_reward"] = float(row["cum_reward"])
                    entry["final_regret"] = float(row["cum_regret"])
                    entry["restarts"] = int(row["restart_count"])
    cells = defaultdict(list)
    for entry in per_run.values():
        cells[entry["key"]].append(entry)
    rows = []
    for key in sorted(cells):
        group = cells[key]
        rew_m, rew_s = _mean_std([g["final_reward"] for g in group])
        reg_m, reg_s = _mean_std([g["final_regret"] for g in group])
        wall_m, _ = _mean_std([np.mean(g["wall"]) / 1e6 for g in group])
        rst_m, _ = _mean_std([g["restarts"] for g in group])
        rows.append(dict(zip(SUMMARY_COLUMNS, [
            key[0], key[1], key[2], key[3], len(group),
            rew_m, rew_s, reg_m, reg_s, wall_m, rst_m,
        ])))
    return rows


def format_summary_table(rows):
    headers = SUMMARY_COLUMNS
    table = [headers] + [
        [f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]) for c in headers]
        for row in rows
    ]
    widths = [max(len(line[i]) for line in table) for i in range(len(headers))]
    lines = []
    for j, line in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)))
        if j == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    return "\n".join(lines) + "\n"


def write_outputs(out_dir, cfg, cells, results, failures):
    os.makedirs(out_dir, exist_ok=True)
    merged = os.path.join(out_dir, "results.csv")
    with open(merged, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for spec in cells:  # deterministic matrix order
            if spec.run_id in results:
                writer.writerows(result_rows(results[spec.run_id]))

    summary_rows = summarize_results(results)
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in summary_rows:
            out = dict(row)
            for k, v in out.items():
                if isinstance(v, float):
                    out[k] = repr(v)
            writer.writerow(out)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(format_summary_table(summary_rows))

    manifest = {
        "config": cfg,
        "runs": {
            rid: {
                "oracle_calls": res.oracle_calls,
                "oracle_exact": res.oracle_exact,
                "regret_mode": res.regret_mode,
                "final_cum_reward": res.final_cum_reward(),
                "final_cum_regret": res.final_cum_regret(),
                "restarts": res.trace.restart_count[-1],
            }
            for rid, res in sorted(results.items())
        },
        "failed_cells": failures,
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return merged, summary_rows
