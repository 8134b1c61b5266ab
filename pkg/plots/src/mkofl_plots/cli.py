"""Command-line figure renderer: `plot <kind> <csv> --out <path>`."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render a line figure from a simulation CSV table")
    parser.add_argument("kind", choices=KINDS,
                        help="figure kind: single [0,1] fraction curve, or "
                             "one MSE line per column")
    parser.add_argument("csv", help="input CSV (header row + numeric rows)")
    parser.add_argument("--out",
                        help="output image path; the suffix picks the "
                             "format (SVG default, PNG supported); "
                             "defaults to <kind>.svg next to the CSV")
    parser.add_argument("--log-y", action="store_true",
                        help="logarithmic y axis (mse_compare only)")
    parser.add_argument("--title", help="figure title")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, csv_path=args.csv, out_path=args.out,
                      log_y=args.log_y, title=args.title)
    try:
        out = render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
