"""CLI: `plot heatmap <csv> -o out.png`, `plot traj <csv> --axes 0 2 -o out.png`."""

from __future__ import annotations

import argparse
import sys

from .heatmap import render_heatmap
from .jobs import MalformedCsv, PlotJob, load_regions
from .trajectories import render_trajectories


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot", description=__doc__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for name in ("heatmap", "traj"):
        p = sub.add_parser(name)
        p.add_argument("csv", help="input CSV emitted by the synthesis CLI")
        p.add_argument("-o", "--output", required=True, help="output image path")
        p.add_argument("--axes", type=int, nargs=2, help="projection axes")
        p.add_argument("--regions", help="regions CSV for goal/critical overlays")
        p.add_argument("--title")
    args = parser.parse_args(argv)

    overlays = []
    try:
        if args.regions:
            overlays = load_regions(args.regions)
        job = PlotJob(input_csv=args.csv, output_path=args.output,
                      kind=args.kind, axes=tuple(args.axes or ()),
                      overlays=overlays, title=args.title)
        if args.kind == "heatmap":
            grid = render_heatmap(job)
            print(f"wrote {args.output} ({'x'.join(str(s) for s in grid.shape)} cells)")
        else:
            count = render_trajectories(job)
            print(f"wrote {args.output} ({count} trajectories)")
        return 0
    except (MalformedCsv, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
