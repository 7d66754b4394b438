"""Command line entry points: `psrl run` executes a config's run matrix,
`psrl summarize` re-aggregates result CSVs (including external baselines)."""
from __future__ import annotations

import argparse
import glob
import json
import sys

from psrl.harness.config import ConfigError, load_config, validate_config
from psrl.harness.runner import expand_and_run
from psrl.harness.summary import format_summary_table, summarize_csv_files, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _apply_flag_overrides(cfg, args):
    if args.episodes is not None:
        cfg["episodes"] = args.episodes
    if args.seeds is not None:
        cfg["seeds"] = [int(s) for s in args.seeds.split(",") if s]
    if args.algo is not None:
        keep = set(args.algo.split(","))
        cfg["algorithms"] = [a for a in cfg["algorithms"]
                             if (a.get("name") or a["kind"]) in keep]
    if args.env is not None:
        cfg.setdefault("env", {})["kind"] = args.env
    if args.xi is not None:
        cfg["protocol"] = {"kind": "ps-geometric", "xi": args.xi,
                           "seed": cfg.get("protocol", {}).get("seed", 0)}
    if args.regret_mode is not None:
        cfg["regret_mode"] = args.regret_mode
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.out is not None:
        cfg["out_dir"] = args.out
    return cfg


def cmd_run(args):
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        cfg = _apply_flag_overrides(cfg, args)
        cfg = validate_config(cfg)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = cfg.get("out_dir", "results")
    cells, results, failures = expand_and_run(cfg)
    merged, summary_rows = write_outputs(out_dir, cfg, cells, results, failures)
    print(format_summary_table(summary_rows), end="")
    if failures:
        print(f"{len(failures)} cell(s) failed:", file=sys.stderr)
        for rid, err in sorted(failures.items()):
            print(f"  {rid}: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"results written to {merged}")
    return EXIT_OK


def cmd_summarize(args):
    paths = sorted(p for pattern in args.inputs for p in glob.glob(pattern))
    if not paths:
        print("no input files matched", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = summarize_csv_files(paths)
    except ValueError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = format_summary_table(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="psrl",
                                     description="piecewise-stationary RL experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a config's run matrix")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--seeds", default=None, help="comma-separated list")
    run_p.add_argument("--algo", default=None, help="comma-separated name filter")
    run_p.add_argument("--env", default=None)
    run_p.add_argument("--xi", type=float, default=None)
    run_p.add_argument("--episodes", type=int, default=None)
    run_p.add_argument("--regret-mode", dest="regret_mode",
                       choices=["expected", "realized"], default=None)
    run_p.add_argument("--threads", type=int, default=None)
    run_p.set_defaults(func=cmd_run)

    sum_p = sub.add_parser("summarize", help="aggregate result CSVs")
    sum_p.add_argument("--in", dest="inputs", nargs="+", required=True)
    sum_p.add_argument("--out", default=None)
    sum_p.set_defaults(func=cmd_summarize)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
