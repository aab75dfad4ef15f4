"""cyclefigs — render figures from dualplc run artifacts.

  cyclefigs timeplot --cycles runs/dual/cycles.csv --out figs/dual-time
  cyclefigs boxplot  --cycles runs/dual/cycles.csv --out figs/dual-box
  cyclefigs density  --cycles runs/base/cycles.csv --out figs/base-density

Each command writes <out>.png and <out>.svg.
"""

from __future__ import annotations

import argparse
import sys

from cyclefigs import FigureError, __version__
from cyclefigs import plots


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems are config-class errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    p = _Parser(prog="cyclefigs", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--cycles", required=True,
                        help="cycles.csv from a simulator run")
        sp.add_argument("--out", required=True,
                        help="output path; .png and .svg are written")

    tp = sub.add_parser("timeplot", help="cycle time over the run")
    common(tp)

    bp = sub.add_parser("boxplot", help="one box per segment")
    common(bp)
    bp.add_argument("--summary", default=None,
                    help="summary.csv to take the box statistics from "
                         "(default: one next to the cycles file, if any)")

    dp = sub.add_parser("density", help="cycle time distribution per segment")
    common(dp)
    dp.add_argument("--nominal", type=int, default=None,
                    help="nominal cycle time in us, sets the bin width "
                         "(default: from run-manifest.json, else the median)")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "timeplot":
            written = plots.render_timeplot(args.cycles, args.out)
        elif args.command == "boxplot":
            result = plots.render_boxplot(args.cycles, args.out,
                                          summary_path=args.summary)
            written = result.paths
        else:
            written = plots.render_density(args.cycles, args.out,
                                           nominal_us=args.nominal)
        for path in written:
            print(f"wrote {path}")
        return 0
    except SystemExit as e:
        return int(e.code or 0)
    except FigureError as e:
        print(f"cyclefigs: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"cyclefigs: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
