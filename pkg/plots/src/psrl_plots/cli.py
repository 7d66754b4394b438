"""CLI: psrl-plot --in 'results/*.csv' --metric cum_reward --group env,protocol --out figures"""
from __future__ import annotations

import argparse
import glob
import sys

from psrl_plots.render import PlotSpec, SchemaError, render


def main(argv=None):
    parser = argparse.ArgumentParser(prog="psrl-plot",
                                     description="render result CSVs into panels")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="result CSV paths or globs")
    parser.add_argument("--metric", default="cum_reward",
                        choices=["cum_reward", "cum_regret"])
    parser.add_argument("--group", default="env,protocol",
                        help="comma-separated panel grouping columns")
    parser.add_argument("--band", default="minmax", choices=["minmax", "std"])
    parser.add_argument("--smooth", type=int, default=0,
                        help="rolling-mean window (episodes)")
    parser.add_argument("--out", default="figures")
    parser.add_argument("--format", dest="image_format", default="png")
    args = parser.parse_args(argv)

    paths = sorted(p for pattern in args.inputs for p in glob.glob(pattern))
    if not paths:
        print("no input files matched", file=sys.stderr)
        return 2
    try:
        spec = PlotSpec(inputs=paths, metric=args.metric,
                        group=tuple(args.group.split(",")), band=args.band,
                        smooth=args.smooth, out_dir=args.out,
                        image_format=args.image_format)
        written = render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
